//! Grounding of generated text: spans wrapped in `<ocr>` are looked up in the
//! page index and given boxes; spans that cannot be found become plain text.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Sample;
use crate::index::TextIndex;
use crate::markup::{self, parse, Anchor, FormatDefect, GroundedText, Segment, SerializeError, Span};
use crate::taxonomy::{classify_task, AnswerClass, DocType};
use crate::templates::TemplateSet;
use crate::text::stable_hash;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationOutcome {
    pub doc: GroundedText,
    pub located: usize,
    pub degraded: usize,
    /// Located spans whose box is the union of wrapped lines.
    pub multiline: usize,
}

/// Grounds every box-less span of `generated` against `index`.
///
/// Repeated identical spans take successive occurrences in reading order;
/// once all occurrences are used the first one is reused. Spans that already
/// carry a box are kept as they are and count as located.
pub fn locate_and_ground(generated: &str, index: &TextIndex) -> Result<AnnotationOutcome, Vec<FormatDefect>> {
    let parsed = parse(generated)?;
    let mut consumed = HashSet::new();
    let mut out = AnnotationOutcome {
        doc: GroundedText::default(),
        located: 0,
        degraded: 0,
        multiline: 0,
    };
    for seg in parsed.segments {
        match seg {
            Segment::Grounded(span) if span.quant_box().is_some() => {
                out.located += 1;
                out.doc.push(Segment::Grounded(span));
            }
            Segment::Grounded(span) => {
                let cands = index.query(&span.text);
                let chosen = cands
                    .iter()
                    .find(|c| !consumed.contains(&c.key()))
                    .or_else(|| cands.first());
                match chosen {
                    Some(c) => {
                        consumed.insert(c.key());
                        out.located += 1;
                        out.multiline += usize::from(c.multiline);
                        out.doc.push(Segment::Grounded(Span {
                            text: span.text,
                            anchor: Anchor::Box(c.bbox.quantize()),
                        }));
                    }
                    None => {
                        out.degraded += 1;
                        out.doc.push_plain(&span.text);
                    }
                }
            }
            Segment::Plain(t) => out.doc.push_plain(&t),
            region => out.doc.push(region),
        }
    }
    Ok(out)
}

/// Which format templates were appended to a question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptChoice {
    pub seed: u64,
    /// Indices into the class's template list(s); two for grounded reasoning.
    pub templates: Vec<usize>,
}

fn choose(sample_id: &str, tag: &str, seed: u64, n: usize) -> usize {
    (stable_hash(&[sample_id, tag, &seed.to_string()]) % n as u64) as usize
}

/// Appends the response-format suffix for `class`. Plain answers get none.
/// The choice depends only on (sample id, class, seed).
pub fn attach_format_prompt(
    question: &str,
    class: AnswerClass,
    templates: &TemplateSet,
    sample_id: &str,
    seed: u64,
) -> (String, PromptChoice) {
    let mut picked = Vec::new();
    let parts: Vec<&str> = match class {
        AnswerClass::PA => Vec::new(),
        AnswerClass::GA => {
            let i = choose(sample_id, "GA", seed, templates.grounded_answer.len());
            picked.push(i);
            vec![&templates.grounded_answer[i]]
        }
        AnswerClass::GO => {
            let i = choose(sample_id, "GO", seed, templates.reasoning_first.len());
            picked.push(i);
            vec![&templates.reasoning_first[i]]
        }
        AnswerClass::GR => {
            let i = choose(sample_id, "GR", seed, templates.reasoning_first.len());
            let j = choose(sample_id, "GR/2", seed, templates.reasoning_second.len());
            picked.extend([i, j]);
            vec![&templates.reasoning_first[i], &templates.reasoning_second[j]]
        }
    };
    let mut q = question.to_string();
    for p in parts {
        q.push(' ');
        q.push_str(p);
    }
    (q, PromptChoice { seed, templates: picked })
}

/// One generated question/answer pair awaiting grounding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedItem {
    pub id: String,
    pub page: String,
    pub question: String,
    pub answer: String,
    pub answer_class: AnswerClass,
}

#[derive(Debug, Error, PartialEq)]
pub enum AnnotateError {
    #[error("unknown page {0:?}")]
    UnknownPage(String),
    #[error("markup defects: {0:?}")]
    Markup(Vec<FormatDefect>),
    #[error("no span of a {0} answer could be located")]
    NothingLocated(AnswerClass),
    #[error(transparent)]
    Serialize(#[from] SerializeError),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateStats {
    pub items: usize,
    pub emitted: usize,
    pub dropped: usize,
    pub located: usize,
    pub degraded: usize,
    pub multiline: usize,
}

impl AnnotateStats {
    pub fn add(&mut self, o: &AnnotationOutcome) {
        self.located += o.located;
        self.degraded += o.degraded;
        self.multiline += o.multiline;
    }
}

/// Turns a generated item into a sample: grounds the answer, appends the
/// format prompt and derives the task label.
pub fn build_sample(
    item: &GeneratedItem,
    doc_type: DocType,
    index: &TextIndex,
    templates: &TemplateSet,
    seed: u64,
) -> Result<(Sample, AnnotationOutcome, PromptChoice), AnnotateError> {
    let question = parse(&item.question).map_err(AnnotateError::Markup)?;
    let outcome = locate_and_ground(&item.answer, index).map_err(AnnotateError::Markup)?;
    let answer = if item.answer_class.is_grounded() {
        if outcome.doc.spans().next().is_none() {
            return Err(AnnotateError::NothingLocated(item.answer_class));
        }
        markup::serialize(&outcome.doc)?
    } else {
        markup::strip_grounding(&outcome.doc)
    };
    let (q, choice) = attach_format_prompt(&item.question, item.answer_class, templates, &item.id, seed);
    let sample = Sample {
        id: item.id.clone(),
        doc_type,
        page: Some(item.page.clone()),
        question: q,
        answer,
        answer_class: item.answer_class,
        task: classify_task(&question, item.answer_class),
    };
    Ok((sample, outcome, choice))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::markup::strip_grounding;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn index() -> TextIndex {
        TextIndex::from_blocks([
            ("Total: 42", bb(0.1, 0.1, 0.3, 0.12)),
            ("Venue", bb(0.1, 0.2, 0.3, 0.22)),
            ("Venue", bb(0.5, 0.2, 0.7, 0.22)),
        ])
    }

    #[test]
    fn unique_hit_gets_box() {
        let o = locate_and_ground("The sum is <ocr>Total: 42</ocr>.", &index()).unwrap();
        assert_eq!((o.located, o.degraded), (1, 0));
        assert_eq!(
            markup::serialize(&o.doc).unwrap(),
            "The sum is <ocr>Total: 42</ocr><bbox>100,100,300,120</bbox>."
        );
    }

    #[test]
    fn missing_span_degrades() {
        let o = locate_and_ground("See <ocr>gibberish</ocr> here", &index()).unwrap();
        assert_eq!((o.located, o.degraded), (0, 1));
        assert_eq!(o.doc, GroundedText::plain("See gibberish here"));
    }

    #[test]
    fn repeated_spans_take_successive_occurrences() {
        let o = locate_and_ground("<ocr>Venue</ocr> and <ocr>Venue</ocr>", &index()).unwrap();
        let boxes: Vec<_> = o.doc.spans().map(|s| s.quant_box().unwrap().coords()).collect();
        assert_eq!(boxes, vec![[100, 200, 300, 220], [500, 200, 700, 220]]);
        let again = locate_and_ground("<ocr>Venue</ocr> and <ocr>Venue</ocr>", &index()).unwrap();
        assert_eq!(again, o);
    }

    #[test]
    fn visible_text_preserved() {
        let g = "A <ocr>Venue</ocr>, <ocr>nope</ocr> <bbox>1,2,3,4</bbox>";
        let o = locate_and_ground(g, &index()).unwrap();
        assert_eq!(strip_grounding(&o.doc), strip_grounding(&parse(g).unwrap()));
    }

    #[test]
    fn parse_defects_propagate() {
        assert!(locate_and_ground("<ocr>open", &index()).is_err());
    }

    #[test]
    fn format_prompts() {
        let t = TemplateSet::default();
        let (q, c) = attach_format_prompt("Why?", AnswerClass::PA, &t, "s1", 7);
        assert_eq!(q, "Why?");
        assert!(c.templates.is_empty());

        let (q, c) = attach_format_prompt("Why?", AnswerClass::GA, &t, "s1", 7);
        let expect = (stable_hash(&["s1", "GA", "7"]) % 7) as usize;
        assert_eq!(c.templates, vec![expect]);
        assert_eq!(q, format!("Why? {}", t.grounded_answer[expect]));

        let (q, c) = attach_format_prompt("Why?", AnswerClass::GR, &t, "s1", 7);
        assert_eq!(c.templates.len(), 2);
        assert!(q.ends_with(&t.reasoning_second[c.templates[1]]));
        assert!(q.contains(&t.reasoning_first[c.templates[0]]));
    }
}
