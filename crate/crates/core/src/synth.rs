//! Seeded synthetic data: raster scenes, merge pages, bench corpora and
//! pages for post-annotation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Page, PosterPage, Sample, TextBox};
use crate::geometry::{BBox, QuantBox};
use crate::layout::{Block, Granularity, Source};
use crate::markup::{self, GroundedText, Segment, Span};
use crate::raster::{Canvas, Layer, PixelBox, Scene, Shape};
use crate::taxonomy::{AnswerClass, DocType, TaskKind};

const WORDS: &[&str] = &[
    "annual", "report", "revenue", "growth", "market", "summer", "festival", "music", "total", "price", "ticket", "venue",
    "north", "south", "quarter", "sales", "profit", "design", "studio", "open", "night", "city", "river", "garden",
    "data", "chart", "model", "index", "value", "share", "energy", "solar", "wind", "coffee", "bakery", "fresh",
];

pub fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn far_color<R: Rng>(rng: &mut R, bg: [u8; 4]) -> [u8; 4] {
    let mut c = [0, 0, 0, 255];
    for k in 0..3 {
        // At least 64 levels away from the background in every channel.
        c[k] = if bg[k] >= 128 {
            rng.gen_range(0..=bg[k] - 64)
        } else {
            rng.gen_range(bg[k] + 64..=255)
        };
    }
    c
}

fn overlaps(a: &PixelBox, b: &PixelBox) -> bool {
    a.px1 < b.px2 && b.px1 < a.px2 && a.py1 < b.py2 && b.py1 < a.py2
}

/// Random scene whose layers have pairwise disjoint extents and colors far
/// from the background, so each layer is fully visible. Returns the scene
/// and each layer's constructed extent.
pub fn random_scene<R: Rng>(rng: &mut R, max_layers: usize) -> (Scene, Vec<PixelBox>) {
    let bg = [rng.gen(), rng.gen(), rng.gen(), 255];
    let canvas = Canvas {
        width: rng.gen_range(64..=160),
        height: rng.gen_range(48..=120),
        background: bg,
    };
    let mut layers = Vec::new();
    let mut extents: Vec<PixelBox> = Vec::new();
    let want = rng.gen_range(1..=max_layers.max(1));
    let mut tries = 0;
    while layers.len() < want && tries < 200 {
        tries += 1;
        let shape = if rng.gen_bool(0.5) {
            Shape::Rect {
                x: rng.gen_range(0..canvas.width - 4),
                y: rng.gen_range(0..canvas.height - 4),
                w: rng.gen_range(1..=24),
                h: rng.gen_range(1..=16),
            }
        } else {
            Shape::Text {
                x: rng.gen_range(0..canvas.width - 8),
                y: rng.gen_range(0..canvas.height - 8),
                text: words(rng, 1, 1).chars().take(rng.gen_range(1..=4)).collect(),
                scale: rng.gen_range(1..=2),
            }
        };
        let layer = Layer {
            id: format!("L{}", layers.len()),
            shape,
            fill: far_color(rng, bg),
            opacity: rng.gen_range(0.5..=1.0),
        };
        let Some(ext) = layer.extent(&canvas) else { continue };
        if extents.iter().any(|e| overlaps(e, &ext)) {
            continue;
        }
        extents.push(ext);
        layers.push(layer);
    }
    (Scene { canvas, layers }, extents)
}

/// Adds an opaque rectangle on top of layer `i` covering its extent; the
/// covered layer then changes no pixel when toggled.
pub fn occlude(scene: &mut Scene, i: usize) {
    let ext = scene.layers[i].extent(&scene.canvas).expect("visible layer");
    let fill = [scene.canvas.background[0] ^ 0x80, 17, 201, 255];
    scene.layers.push(Layer {
        id: format!("cover-{}", scene.layers[i].id),
        shape: Shape::Rect {
            x: ext.px1,
            y: ext.py1,
            w: ext.px2 - ext.px1,
            h: ext.py2 - ext.py1,
        },
        fill,
        opacity: 1.0,
    });
}

fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2).expect("generated inside the page")
}

/// Block lists for one synthetic page: `(ordered, unordered)`. The page has
/// one to three columns of stacked blocks. The ordered list misses some
/// blocks and splits others into halves; the unordered list holds every
/// block complete, shuffled.
pub fn random_merge_page<R: Rng>(rng: &mut R) -> (Vec<Block>, Vec<Block>) {
    let cols = rng.gen_range(1..=3);
    let col_w = 0.9 / cols as f64;
    let mut truth = Vec::new();
    for c in 0..cols {
        let x1 = 0.05 + c as f64 * col_w;
        let x2 = x1 + col_w * 0.9;
        let mut y = 0.05;
        for _ in 0..rng.gen_range(1..=5) {
            let h = rng.gen_range(0.04..0.15);
            if y + h > 0.95 {
                break;
            }
            truth.push((words(rng, 2, 8), bb(x1, y, x2, y + h)));
            y += h + rng.gen_range(0.01..0.05);
        }
    }
    let mut ordered = Vec::new();
    let mut unordered = Vec::new();
    for (i, (text, b)) in truth.iter().enumerate() {
        unordered.push(Block {
            id: format!("u{i}"),
            text: text.clone(),
            bbox: *b,
            source: Source::Unordered,
            granularity: Granularity::Paragraph,
        });
        let roll: f64 = rng.gen();
        let toks: Vec<&str> = text.split(' ').collect();
        if roll < 0.2 {
            continue;
        } else if roll < 0.4 && toks.len() >= 2 {
            let cut = toks.len() / 2;
            let mid = (b.y1() + b.y2()) / 2.0;
            for (k, (part, y1, y2)) in [(toks[..cut].join(" "), b.y1(), mid), (toks[cut..].join(" "), mid, b.y2())]
                .into_iter()
                .enumerate()
            {
                ordered.push(Block {
                    id: format!("o{i}.{k}"),
                    text: part,
                    bbox: bb(b.x1(), y1, b.x2(), y2),
                    source: Source::Ordered,
                    granularity: Granularity::Line,
                });
            }
        } else {
            ordered.push(Block {
                id: format!("o{i}"),
                text: text.clone(),
                bbox: *b,
                source: Source::Ordered,
                granularity: Granularity::Paragraph,
            });
        }
    }
    unordered.shuffle(rng);
    (ordered, unordered)
}

/// Task counts of a synthetic bench.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchMix {
    pub per_grounding_task: usize,
    pub referring: usize,
    pub per_ground_refer_task: usize,
}

impl Default for BenchMix {
    /// 1.8k grounding, 0.6k referring and 1.2k ground-and-refer samples.
    fn default() -> Self {
        Self {
            per_grounding_task: 600,
            referring: 600,
            per_ground_refer_task: 400,
        }
    }
}

fn random_quant<R: Rng>(rng: &mut R) -> QuantBox {
    let x1 = rng.gen_range(0..900);
    let y1 = rng.gen_range(0..900);
    let x2 = rng.gen_range(x1 + 5..=(x1 + 300).min(999));
    let y2 = rng.gen_range(y1 + 5..=(y1 + 100).min(999));
    QuantBox::new(x1, y1, x2, y2).expect("ordered in range")
}

fn grounded<R: Rng>(rng: &mut R, doc: &mut GroundedText) {
    doc.push(Segment::Grounded(Span::boxed(words(rng, 1, 3), random_quant(rng))));
}

fn question<R: Rng>(rng: &mut R, refer: bool) -> String {
    let mut q = GroundedText::plain(format!("What about the {}", words(rng, 1, 3)));
    if refer {
        q.push_plain(" in ");
        q.push(Segment::Region(random_quant(rng)));
    }
    q.push_plain("?");
    markup::serialize(&q).expect("canonical")
}

fn answer<R: Rng>(rng: &mut R, class: AnswerClass) -> String {
    let mut a = GroundedText::default();
    match class {
        AnswerClass::PA => a.push_plain(&words(rng, 1, 4)),
        AnswerClass::GA => grounded(rng, &mut a),
        AnswerClass::GO => {
            a.push_plain(&format!("{} ", words(rng, 3, 8)));
            for _ in 0..rng.gen_range(1..=3) {
                grounded(rng, &mut a);
                a.push_plain(&format!(" {} ", words(rng, 2, 5)));
            }
        }
        AnswerClass::GR => {
            a.push_plain("Because ");
            grounded(rng, &mut a);
            a.push_plain(&format!(" shows {}. Answer: ", words(rng, 2, 5)));
            grounded(rng, &mut a);
        }
    }
    markup::serialize(&a).expect("canonical")
}

/// Ground-truth samples with the given task mix, doc types in rotation.
pub fn synthetic_bench<R: Rng>(rng: &mut R, mix: BenchMix) -> Vec<Sample> {
    let mut plan = Vec::new();
    for t in [TaskKind::Ga, TaskKind::Gr, TaskKind::Go] {
        plan.extend(std::iter::repeat_n(t, mix.per_grounding_task));
    }
    plan.extend(std::iter::repeat_n(TaskKind::Rt, mix.referring));
    for t in [TaskKind::GRa, TaskKind::GRr, TaskKind::GRo] {
        plan.extend(std::iter::repeat_n(t, mix.per_ground_refer_task));
    }
    plan.into_iter()
        .enumerate()
        .map(|(i, task)| {
            let (input, class) = task.classes();
            Sample {
                id: format!("bench-{i:05}"),
                doc_type: DocType::ALL[i % 3],
                page: None,
                question: question(rng, input == crate::taxonomy::InputClass::GQ),
                answer: answer(rng, class),
                answer_class: class,
                task,
            }
        })
        .collect()
}

/// A poster page with repeated paragraphs and wrapped lines, plus generated
/// text whose `<ocr>` spans quote the page, repeat, wrap across lines, or
/// are absent from it.
pub fn random_annotation_page<R: Rng>(rng: &mut R, id: &str) -> (Page, String) {
    let n = rng.gen_range(2..=6);
    let mut paras: Vec<TextBox> = Vec::new();
    let mut y = 20;
    for _ in 0..n {
        let lines = rng.gen_range(1..=3);
        let text = if !paras.is_empty() && rng.gen_bool(0.25) {
            paras[rng.gen_range(0..paras.len())].text.clone()
        } else {
            (0..lines).map(|_| words(rng, 2, 4)).collect::<Vec<_>>().join("\n")
        };
        let h = 30 * text.split('\n').count() as i64;
        if y + h > 990 {
            break;
        }
        let x1 = rng.gen_range(10..400);
        paras.push(TextBox {
            text,
            bbox: QuantBox::new(x1, y, x1 + rng.gen_range(100..580), y + h).expect("in range"),
        });
        y += h + rng.gen_range(5..60);
    }
    let mut gen = GroundedText::plain("Summary: ");
    for _ in 0..rng.gen_range(1..=6) {
        let p = &paras[rng.gen_range(0..paras.len())];
        let lines: Vec<&str> = p.text.split('\n').collect();
        let roll: f64 = rng.gen();
        let span = if roll < 0.15 {
            "zzqx unknown".to_string()
        } else if roll < 0.35 && lines.len() >= 2 {
            let k = rng.gen_range(0..lines.len() - 1);
            let a = lines[k].split(' ').next_back().unwrap_or_default();
            let b = lines[k + 1].split(' ').next().unwrap_or_default();
            format!("{a} {b}")
        } else {
            lines[rng.gen_range(0..lines.len())].to_string()
        };
        gen.push(Segment::Grounded(Span::unboxed(span)));
        gen.push_plain(&format!(" {} ", words(rng, 1, 3)));
    }
    let page = Page::Poster(PosterPage {
        id: id.to_string(),
        image: format!("{id}.png"),
        text_with_box: paras,
        meta: None,
    });
    (page, markup::serialize_partial(&gen).expect("canonical"))
}
