//! Rule-based sample filter: markup format first, then grounded spans against
//! the page annotations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Page, Sample};
use crate::geometry::QuantBox;
use crate::index::TextIndex;
use crate::markup::{parse_strict, strip_grounding, DefectKind, GroundedText, StrictRules};
use crate::taxonomy::{classify_task, AnswerClass, DocType, TaskKind};

/// Minimum IoU between a span box and its annotated box.
pub const BOX_MATCH_IOU: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Question,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDefect {
    pub part: Part,
    pub kind: DefectKind,
    /// Byte offset within that part.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContentReason {
    NotInAnnotations,
    BoxMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentError {
    pub part: Part,
    pub text: String,
    pub reason: ContentReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub defects: Vec<SampleDefect>,
    pub content_errors: Vec<ContentError>,
}

impl Verdict {
    fn new(defects: Vec<SampleDefect>, content_errors: Vec<ContentError>) -> Self {
        Self {
            accepted: defects.is_empty() && content_errors.is_empty(),
            defects,
            content_errors,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Also check PDF samples against their page text.
    pub strict_pdf: bool,
}

fn parse_part(raw: &str, part: Part, defects: &mut Vec<SampleDefect>) -> Option<GroundedText> {
    let rules = StrictRules {
        allow_regions: part == Part::Question,
    };
    match parse_strict(raw, rules) {
        Ok(doc) => Some(doc),
        Err(found) => {
            defects.extend(found.into_iter().map(|d| SampleDefect {
                part,
                kind: d.kind,
                offset: d.offset,
            }));
            None
        }
    }
}

fn check_spans(doc: &GroundedText, part: Part, index: &TextIndex, errors: &mut Vec<ContentError>) {
    for span in doc.spans() {
        let Some(q) = span.quant_box() else { continue };
        let cands = index.query(&span.text);
        let reason = if cands.is_empty() {
            ContentReason::NotInAnnotations
        } else if cands.iter().any(|c| box_matches(&c.bbox.quantize(), &q)) {
            continue;
        } else {
            ContentReason::BoxMismatch
        };
        errors.push(ContentError {
            part,
            text: span.text.clone(),
            reason,
        });
    }
}

fn box_matches(a: &QuantBox, b: &QuantBox) -> bool {
    a == b || a.dequantize().iou(&b.dequantize()) >= BOX_MATCH_IOU
}

/// Checks raw question/answer strings. Content is checked for posters and
/// charts whenever `page` is given, and for PDFs only in strict mode.
pub fn validate_sample(
    question: &str,
    answer: &str,
    doc_type: DocType,
    page: Option<&Page>,
    opts: VerifyOptions,
) -> Verdict {
    let mut defects = Vec::new();
    let q = parse_part(question, Part::Question, &mut defects);
    let a = parse_part(answer, Part::Answer, &mut defects);
    let mut content = Vec::new();
    let check = doc_type != DocType::Pdf || opts.strict_pdf;
    if let (true, Some(page)) = (check, page) {
        let index = TextIndex::build(page);
        for (doc, part) in [(q, Part::Question), (a, Part::Answer)] {
            if let Some(doc) = doc {
                check_spans(&doc, part, &index, &mut content);
            }
        }
    }
    Verdict::new(defects, content)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeriveError {
    #[error("sample {id:?} has task {task}, expected Ga")]
    NotGa { id: String, task: TaskKind },
    #[error("sample {0:?} does not parse")]
    Unparseable(String),
}

/// Plain-answer copy of a grounding sample.
pub fn derive_plain_qa(sample: &Sample) -> Result<Sample, DeriveError> {
    if sample.task != TaskKind::Ga {
        return Err(DeriveError::NotGa {
            id: sample.id.clone(),
            task: sample.task,
        });
    }
    let answer = parse_strict(&sample.answer, StrictRules { allow_regions: false })
        .map_err(|_| DeriveError::Unparseable(sample.id.clone()))?;
    Ok(Sample {
        id: format!("{}.plain", sample.id),
        answer: strip_grounding(&answer),
        answer_class: AnswerClass::PA,
        task: TaskKind::PlainQA,
        ..sample.clone()
    })
}

/// Recomputes the task label from the question markup.
pub fn relabel(sample: &Sample) -> Result<Sample, Vec<SampleDefect>> {
    let mut defects = Vec::new();
    let q = parse_part(&sample.question, Part::Question, &mut defects).ok_or(defects)?;
    Ok(Sample {
        task: classify_task(&q, sample.answer_class),
        ..sample.clone()
    })
}
