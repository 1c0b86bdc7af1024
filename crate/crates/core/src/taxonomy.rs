//! Bench task taxonomy: input class (grounded or plain question) crossed with
//! answer class gives seven scored tasks plus plain QA.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::GroundedText;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} {value:?}")]
pub struct UnknownLabel {
    pub what: &'static str,
    pub value: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocType {
    Poster,
    Chart,
    Pdf,
}

impl DocType {
    pub const ALL: [DocType; 3] = [DocType::Poster, DocType::Chart, DocType::Pdf];

    pub fn as_str(&self) -> &'static str {
        match self {
            DocType::Poster => "poster",
            DocType::Chart => "chart",
            DocType::Pdf => "pdf",
        }
    }
}

impl fmt::Display for DocType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputClass {
    /// Grounded question: carries at least one box.
    GQ,
    /// Plain-text question.
    PQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerClass {
    /// Short answer with its box.
    GA,
    /// Grounded reasoning ending in `Answer: ...`.
    GR,
    /// Open-ended answer with grounded key phrases.
    GO,
    /// Plain-text answer.
    PA,
}

impl AnswerClass {
    pub const ALL: [AnswerClass; 4] = [AnswerClass::GA, AnswerClass::GR, AnswerClass::GO, AnswerClass::PA];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnswerClass::GA => "GA",
            AnswerClass::GR => "GR",
            AnswerClass::GO => "GO",
            AnswerClass::PA => "PA",
        }
    }

    pub fn is_grounded(&self) -> bool {
        !matches!(self, AnswerClass::PA)
    }
}

impl fmt::Display for AnswerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerClass {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AnswerClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownLabel {
                what: "answer class",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    Ga,
    Gr,
    Go,
    Rt,
    GRa,
    GRr,
    GRo,
    PlainQA,
}

/// How the text part of an answer is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnswerMetric {
    ExactMatch,
    Bleu4,
}

impl TaskKind {
    /// The seven scored tasks, in report column order.
    pub const BENCH: [TaskKind; 7] = [
        TaskKind::Ga,
        TaskKind::Gr,
        TaskKind::Go,
        TaskKind::Rt,
        TaskKind::GRa,
        TaskKind::GRr,
        TaskKind::GRo,
    ];

    pub const ALL: [TaskKind; 8] = [
        TaskKind::Ga,
        TaskKind::Gr,
        TaskKind::Go,
        TaskKind::Rt,
        TaskKind::GRa,
        TaskKind::GRr,
        TaskKind::GRo,
        TaskKind::PlainQA,
    ];

    pub fn from_classes(input: InputClass, answer: AnswerClass) -> TaskKind {
        use AnswerClass::*;
        use InputClass::*;
        match (input, answer) {
            (PQ, GA) => TaskKind::Ga,
            (PQ, GR) => TaskKind::Gr,
            (PQ, GO) => TaskKind::Go,
            (PQ, PA) => TaskKind::PlainQA,
            (GQ, GA) => TaskKind::GRa,
            (GQ, GR) => TaskKind::GRr,
            (GQ, GO) => TaskKind::GRo,
            (GQ, PA) => TaskKind::Rt,
        }
    }

    pub fn classes(&self) -> (InputClass, AnswerClass) {
        use AnswerClass::*;
        use InputClass::*;
        match self {
            TaskKind::Ga => (PQ, GA),
            TaskKind::Gr => (PQ, GR),
            TaskKind::Go => (PQ, GO),
            TaskKind::PlainQA => (PQ, PA),
            TaskKind::GRa => (GQ, GA),
            TaskKind::GRr => (GQ, GR),
            TaskKind::GRo => (GQ, GO),
            TaskKind::Rt => (GQ, PA),
        }
    }

    pub fn answer_class(&self) -> AnswerClass {
        self.classes().1
    }

    pub fn answer_metric(&self) -> AnswerMetric {
        match self.answer_class() {
            AnswerClass::GO => AnswerMetric::Bleu4,
            _ => AnswerMetric::ExactMatch,
        }
    }

    /// Whether the answer carries boxes scored by F1_all.
    pub fn has_grounded_output(&self) -> bool {
        self.answer_class().is_grounded()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Ga => "Ga",
            TaskKind::Gr => "Gr",
            TaskKind::Go => "Go",
            TaskKind::Rt => "Rt",
            TaskKind::GRa => "GRa",
            TaskKind::GRr => "GRr",
            TaskKind::GRo => "GRo",
            TaskKind::PlainQA => "PlainQA",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownLabel {
                what: "task",
                value: s.to_string(),
            })
    }
}

pub fn input_class(question: &GroundedText) -> InputClass {
    if question.has_bbox_group() {
        InputClass::GQ
    } else {
        InputClass::PQ
    }
}

/// A question is grounded iff it holds at least one `<bbox>` group.
pub fn classify_task(question: &GroundedText, answer: AnswerClass) -> TaskKind {
    TaskKind::from_classes(input_class(question), answer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markup::{parse, strip_grounding};

    #[test]
    fn table_rows() {
        let plain = parse("What is the total?").unwrap();
        let boxed = parse("What does <bbox>1,2,3,4</bbox> say?").unwrap();
        assert_eq!(classify_task(&plain, AnswerClass::GA), TaskKind::Ga);
        assert_eq!(classify_task(&boxed, AnswerClass::PA), TaskKind::Rt);
        assert_eq!(classify_task(&boxed, AnswerClass::GR), TaskKind::GRr);
    }

    #[test]
    fn grid_is_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for input in [InputClass::GQ, InputClass::PQ] {
            for answer in AnswerClass::ALL {
                let t = TaskKind::from_classes(input, answer);
                assert_eq!(t.classes(), (input, answer));
                assert!(seen.insert(t));
            }
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn stripped_question_with_plain_answer_is_plain_qa() {
        for raw in ["What is <ocr>X</ocr><bbox>1,1,5,5</bbox>?", "Plain?", "In <bbox>1,2,3,4</bbox>"] {
            let q = parse(raw).unwrap();
            let stripped = parse(&strip_grounding(&q)).unwrap();
            assert_eq!(classify_task(&stripped, AnswerClass::PA), TaskKind::PlainQA);
        }
    }

    #[test]
    fn labels_roundtrip() {
        for t in TaskKind::ALL {
            assert_eq!(t.as_str().parse::<TaskKind>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.as_str()));
        }
        assert!("XX".parse::<AnswerClass>().is_err());
    }
}
