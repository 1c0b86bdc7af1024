//! Corpus records and JSONL persistence.
//!
//! Every line of a corpus file is one JSON object whose `kind` field names the
//! record type. Loading is all-or-nothing: the first bad line aborts with its
//! line number and the JSON path of the offending field.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::QuantBox;
use crate::layout::{Block, Granularity};
use crate::markup::{self, parse, parse_strict, GroundedText, Segment, Span, StrictRules};
use crate::taxonomy::{classify_task, AnswerClass, DocType, TaskKind};
use crate::templates::TemplateSet;
use crate::text::stable_hash;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextBox {
    pub text: String,
    pub bbox: QuantBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosterMeta {
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosterPage {
    pub id: String,
    pub image: String,
    /// Paragraphs in scan order.
    pub text_with_box: Vec<TextBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<PosterMeta>,
}

/// Chart text element; a `None` box marks a masked value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartItem {
    pub text: String,
    pub bbox: Option<QuantBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartPage {
    pub id: String,
    pub image: String,
    #[serde(default)]
    pub title: Option<ChartItem>,
    #[serde(default)]
    pub axis_labels: Vec<ChartItem>,
    #[serde(default)]
    pub legends: Vec<ChartItem>,
    #[serde(default)]
    pub data_markers: Vec<ChartItem>,
}

impl ChartPage {
    /// Title, axis labels, legends, then data markers.
    pub fn items(&self) -> impl Iterator<Item = &ChartItem> {
        self.title
            .iter()
            .chain(&self.axis_labels)
            .chain(&self.legends)
            .chain(&self.data_markers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdfPage {
    pub id: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    /// Blocks in merged reading order.
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsingGranularity {
    Word,
    Phrase,
    Line,
    Paragraph,
    FullPage,
}

impl ParsingGranularity {
    pub const ALL: [ParsingGranularity; 5] = [
        ParsingGranularity::Word,
        ParsingGranularity::Phrase,
        ParsingGranularity::Line,
        ParsingGranularity::Paragraph,
        ParsingGranularity::FullPage,
    ];

    fn block_granularity(&self) -> Option<Granularity> {
        match self {
            ParsingGranularity::Word => Some(Granularity::Word),
            ParsingGranularity::Phrase => Some(Granularity::Phrase),
            ParsingGranularity::Line => Some(Granularity::Line),
            ParsingGranularity::Paragraph => Some(Granularity::Paragraph),
            ParsingGranularity::FullPage => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsingTask {
    /// Text to box.
    Localization,
    /// Box to text.
    Recognition,
    FullPage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParsingRecord {
    pub id: String,
    pub page: String,
    pub granularity: ParsingGranularity,
    pub task: ParsingTask,
    pub instruction: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub doc_type: DocType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<String>,
    pub question: String,
    pub answer: String,
    pub answer_class: AnswerClass,
    pub task: TaskKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InvariantError {
    #[error("{0} text is empty")]
    EmptyText(String),
    #[error("{0} has a null box outside data_markers")]
    NullBox(String),
    #[error("markup defects in {part}: {defects:?}")]
    Markup {
        part: &'static str,
        defects: Vec<markup::FormatDefect>,
    },
    #[error("answer class {class} does not fit the answer markup")]
    AnswerShape { class: AnswerClass },
    #[error("task {declared} disagrees with derived task {derived}")]
    TaskMismatch { declared: TaskKind, derived: TaskKind },
    #[error("full-page target is not JSON: {0}")]
    FullPageJson(String),
    #[error("task {task:?} does not fit granularity {granularity:?}")]
    TaskGranularity {
        task: ParsingTask,
        granularity: ParsingGranularity,
    },
    #[error("duplicate block id {0:?}")]
    DuplicateBlock(String),
}

impl PosterPage {
    pub fn validate(&self) -> Result<(), InvariantError> {
        for (i, tb) in self.text_with_box.iter().enumerate() {
            if tb.text.trim().is_empty() {
                return Err(InvariantError::EmptyText(format!("text_with_box[{i}]")));
            }
        }
        Ok(())
    }
}

impl ChartPage {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let boxed = self.title.iter().map(|t| ("title".to_string(), t)).chain(
            [("axis_labels", &self.axis_labels), ("legends", &self.legends)]
                .into_iter()
                .flat_map(|(name, list)| list.iter().enumerate().map(move |(i, t)| (format!("{name}[{i}]"), t))),
        );
        for (path, item) in boxed {
            if item.bbox.is_none() {
                return Err(InvariantError::NullBox(path));
            }
        }
        for (path, item) in self.items().enumerate().map(|(i, t)| (format!("item {i}"), t)) {
            if item.text.trim().is_empty() {
                return Err(InvariantError::EmptyText(path));
            }
        }
        Ok(())
    }
}

impl PdfPage {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.blocks {
            if b.validate().is_err() {
                return Err(InvariantError::EmptyText(format!("block {:?}", b.id)));
            }
            if !seen.insert(b.id.as_str()) {
                return Err(InvariantError::DuplicateBlock(b.id.clone()));
            }
        }
        Ok(())
    }
}

impl ParsingRecord {
    pub fn validate(&self) -> Result<(), InvariantError> {
        let full = self.granularity == ParsingGranularity::FullPage;
        if full != (self.task == ParsingTask::FullPage) {
            return Err(InvariantError::TaskGranularity {
                task: self.task,
                granularity: self.granularity,
            });
        }
        if full {
            serde_json::from_str::<Value>(&self.target).map_err(|e| InvariantError::FullPageJson(e.to_string()))?;
            return Ok(());
        }
        let doc = parse(&self.target).map_err(|defects| InvariantError::Markup { part: "target", defects })?;
        let ok = match (self.task, doc.segments.as_slice()) {
            (ParsingTask::Localization, [Segment::Region(_)]) => true,
            (ParsingTask::Recognition, [Segment::Grounded(s)]) => s.quant_box().is_none() && !s.text.is_empty(),
            _ => false,
        };
        if !ok {
            return Err(InvariantError::Markup {
                part: "target",
                defects: Vec::new(),
            });
        }
        Ok(())
    }
}

impl Sample {
    /// Parses both sides under the strict rules and checks the declared
    /// labels against the markup.
    pub fn parsed(&self) -> Result<(GroundedText, GroundedText), InvariantError> {
        let question = parse_strict(&self.question, StrictRules { allow_regions: true })
            .map_err(|defects| InvariantError::Markup { part: "question", defects })?;
        let answer = parse_strict(&self.answer, StrictRules { allow_regions: false })
            .map_err(|defects| InvariantError::Markup { part: "answer", defects })?;
        let has_spans = answer.spans().next().is_some();
        if self.answer_class.is_grounded() != has_spans {
            return Err(InvariantError::AnswerShape {
                class: self.answer_class,
            });
        }
        let derived = classify_task(&question, self.answer_class);
        if derived != self.task {
            return Err(InvariantError::TaskMismatch {
                declared: self.task,
                derived,
            });
        }
        Ok((question, answer))
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        self.parsed().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Page {
    Poster(PosterPage),
    Chart(ChartPage),
    Pdf(PdfPage),
}

impl Page {
    pub fn id(&self) -> &str {
        match self {
            Page::Poster(p) => &p.id,
            Page::Chart(p) => &p.id,
            Page::Pdf(p) => &p.id,
        }
    }

    pub fn doc_type(&self) -> DocType {
        match self {
            Page::Poster(_) => DocType::Poster,
            Page::Chart(_) => DocType::Chart,
            Page::Pdf(_) => DocType::Pdf,
        }
    }

    /// The page's full-page parsing layout as compact JSON.
    pub fn full_page_json(&self) -> String {
        #[derive(Serialize)]
        struct ChartLayout<'a> {
            title: &'a Option<ChartItem>,
            axis_labels: &'a [ChartItem],
            legends: &'a [ChartItem],
            data_markers: &'a [ChartItem],
        }
        let value = match self {
            Page::Poster(p) => serde_json::to_string(&p.text_with_box),
            Page::Chart(c) => serde_json::to_string(&ChartLayout {
                title: &c.title,
                axis_labels: &c.axis_labels,
                legends: &c.legends,
                data_markers: &c.data_markers,
            }),
            Page::Pdf(p) => serde_json::to_string(
                &p.blocks
                    .iter()
                    .map(|b| TextBox {
                        text: b.text.clone(),
                        bbox: b.bbox.quantize(),
                    })
                    .collect::<Vec<_>>(),
            ),
        };
        value.expect("layouts are plain data")
    }

    /// (unit id, text, box) triples at the given granularity, in page order.
    fn units(&self, granularity: ParsingGranularity) -> Vec<(String, String, QuantBox)> {
        match (self, granularity) {
            (Page::Poster(p), ParsingGranularity::Paragraph) => p
                .text_with_box
                .iter()
                .enumerate()
                .map(|(i, tb)| (format!("p{i}"), tb.text.clone(), tb.bbox))
                .collect(),
            (Page::Chart(c), ParsingGranularity::Phrase) => c
                .items()
                .enumerate()
                .filter_map(|(i, item)| item.bbox.map(|q| (format!("c{i}"), item.text.clone(), q)))
                .collect(),
            (Page::Pdf(p), g) => match g.block_granularity() {
                Some(bg) => p
                    .blocks
                    .iter()
                    .filter(|b| b.granularity == bg)
                    .map(|b| (b.id.clone(), b.text.clone(), b.bbox.quantize()))
                    .collect(),
                None => Vec::new(),
            },
            _ => Vec::new(),
        }
    }
}

/// Index into `n` templates; consecutive units of a page rotate through the list.
fn pick(page: &str, unit: usize, n: usize) -> usize {
    ((stable_hash(&[page]) % n as u64) as usize + unit) % n
}

fn sanitize(text: &str) -> String {
    // Tag characters cannot appear inside a span; parsing records carry text verbatim otherwise.
    text.replace('<', "(").replace('>', ")")
}

/// Parsing records for one page. Localization and recognition records are
/// emitted for every unit; `FullPage` yields a single JSON-target record.
/// A granularity the page does not carry yields nothing.
pub fn emit_parsing_tasks(page: &Page, granularity: ParsingGranularity, templates: &TemplateSet) -> Vec<ParsingRecord> {
    let pid = page.id();
    if granularity == ParsingGranularity::FullPage {
        let list = templates.full_page(page.doc_type());
        return vec![ParsingRecord {
            id: format!("{pid}/full_page"),
            page: pid.to_string(),
            granularity,
            task: ParsingTask::FullPage,
            instruction: list[pick(pid, 0, list.len())].clone(),
            target: page.full_page_json(),
        }];
    }
    let mut out = Vec::new();
    for (k, (unit, text, q)) in page.units(granularity).into_iter().enumerate() {
        let text = sanitize(&text);
        let loc = &templates.localization[pick(pid, k, templates.localization.len())];
        let mut region = GroundedText::default();
        region.push(Segment::Region(q));
        out.push(ParsingRecord {
            id: format!("{pid}/{unit}/localization"),
            page: pid.to_string(),
            granularity,
            task: ParsingTask::Localization,
            instruction: loc.replace("{text}", &text),
            target: markup::render(&region),
        });
        let rec = &templates.recognition[pick(pid, k, templates.recognition.len())];
        let mut span = GroundedText::default();
        span.push(Segment::Grounded(Span::unboxed(text.clone())));
        out.push(ParsingRecord {
            id: format!("{pid}/{unit}/recognition"),
            page: pid.to_string(),
            granularity,
            task: ParsingTask::Recognition,
            instruction: rec.replace("{bbox}", &format!("<bbox>{q}</bbox>")),
            target: markup::serialize_partial(&span).expect("sanitized span"),
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Poster(PosterPage),
    Chart(ChartPage),
    Pdf(PdfPage),
    Parsing(ParsingRecord),
    Sample(Sample),
}

impl Record {
    pub fn validate(&self) -> Result<(), InvariantError> {
        match self {
            Record::Poster(p) => p.validate(),
            Record::Chart(p) => p.validate(),
            Record::Pdf(p) => p.validate(),
            Record::Parsing(p) => p.validate(),
            Record::Sample(s) => s.validate(),
        }
    }

    pub fn into_page(self) -> Option<Page> {
        match self {
            Record::Poster(p) => Some(Page::Poster(p)),
            Record::Chart(p) => Some(Page::Chart(p)),
            Record::Pdf(p) => Some(Page::Pdf(p)),
            _ => None,
        }
    }
}

impl From<Page> for Record {
    fn from(page: Page) -> Self {
        match page {
            Page::Poster(p) => Record::Poster(p),
            Page::Chart(p) => Record::Chart(p),
            Page::Pdf(p) => Record::Pdf(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadErrorKind {
    Io,
    Syntax,
    Schema,
    OutOfRange,
    UnknownKind,
    Invariant,
}

#[derive(Debug, Error)]
#[error("line {line}: {kind:?} at {path}: {message}")]
pub struct LoadError {
    /// 1-based; 0 for errors not tied to a line.
    pub line: usize,
    pub path: String,
    pub kind: LoadErrorKind,
    pub message: String,
}

impl LoadError {
    fn io(e: io::Error) -> Self {
        Self {
            line: 0,
            path: ".".into(),
            kind: LoadErrorKind::Io,
            message: e.to_string(),
        }
    }
}

fn from_value<T: DeserializeOwned>(value: Value, line: usize) -> Result<T, LoadError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        let kind = if message.contains("out of range") || message.contains("outside [0, 1]") || message.contains("inverted")
        {
            LoadErrorKind::OutOfRange
        } else {
            LoadErrorKind::Schema
        };
        LoadError {
            line,
            path,
            kind,
            message,
        }
    })
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn syntax(line: usize, e: serde_json::Error) -> LoadError {
    LoadError {
        line,
        path: ".".into(),
        kind: LoadErrorKind::Syntax,
        message: e.to_string(),
    }
}

/// Parses corpus text; blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<Record>, LoadError> {
    let mut out = Vec::new();
    for (line, raw) in lines(text) {
        let mut value: Value = serde_json::from_str(raw).map_err(|e| syntax(line, e))?;
        let kind = value
            .as_object_mut()
            .and_then(|o| o.remove("kind"))
            .and_then(|k| k.as_str().map(str::to_string));
        let record = match kind.as_deref() {
            Some("poster") => Record::Poster(from_value(value, line)?),
            Some("chart") => Record::Chart(from_value(value, line)?),
            Some("pdf") => Record::Pdf(from_value(value, line)?),
            Some("parsing") => Record::Parsing(from_value(value, line)?),
            Some("sample") => Record::Sample(from_value(value, line)?),
            other => {
                return Err(LoadError {
                    line,
                    path: "kind".into(),
                    kind: LoadErrorKind::UnknownKind,
                    message: format!("unknown or missing kind {other:?}"),
                })
            }
        };
        record.validate().map_err(|e| LoadError {
            line,
            path: ".".into(),
            kind: LoadErrorKind::Invariant,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Record>, LoadError> {
    parse_corpus(&std::fs::read_to_string(path).map_err(LoadError::io)?)
}

pub fn save_corpus(records: &[Record], path: &Path) -> io::Result<()> {
    write_jsonl(path, records)
}

/// Reads a JSONL file of objects of one type, schema checks only. A `kind`
/// tag, if present, is ignored so corpus files can be read per type.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LoadError> {
    parse_jsonl(&std::fs::read_to_string(path).map_err(LoadError::io)?)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, LoadError> {
    lines(text)
        .map(|(line, raw)| {
            let mut value: Value = serde_json::from_str(raw).map_err(|e| syntax(line, e))?;
            if let Some(o) = value.as_object_mut() {
                o.remove("kind");
            }
            from_value(value, line)
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Splits loaded records into pages, parsing records and samples.
pub fn partition(records: Vec<Record>) -> (Vec<Page>, Vec<ParsingRecord>, Vec<Sample>) {
    let (mut pages, mut parsing, mut samples) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        match r {
            Record::Parsing(p) => parsing.push(p),
            Record::Sample(s) => samples.push(s),
            page => pages.extend(page.into_page()),
        }
    }
    (pages, parsing, samples)
}
