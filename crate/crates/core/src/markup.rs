//! The grounded text format: `<ocr>text</ocr><bbox>x1,y1,x2,y2</bbox>`.
//!
//! A document is a sequence of segments. Besides plain text and grounded
//! spans, a bare `<bbox>` group that follows ordinary text is a *region*: the
//! referring box carried by grounded questions and localization targets.
//!
//! Grammar notes:
//! * tags are case-sensitive and never nest;
//! * an `<ocr>` span binds at most one `<bbox>` group, separated from it by
//!   whitespace only;
//! * `<bbox>null</bbox>` after a span marks a masked value and is removed by
//!   [`degrade_null`];
//! * a span may carry no box at all (generated text awaiting post-annotation).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, QuantBox, QUANT_MAX};

const OCR_OPEN: &str = "<ocr>";
const OCR_CLOSE: &str = "</ocr>";
const BBOX_OPEN: &str = "<bbox>";
const BBOX_CLOSE: &str = "</bbox>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefectKind {
    UnclosedTag,
    BadArity,
    NonNumeric,
    OutOfRange,
    OrphanBBox,
    NullBBox,
    NestedTag,
    /// A span with no `<bbox>` group where one is required.
    MissingBBox,
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A format violation at a byte offset of the raw input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatDefect {
    pub kind: DefectKind,
    pub offset: usize,
}

impl fmt::Display for FormatDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.kind, self.offset)
    }
}

/// What follows a grounded span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Box(QuantBox),
    Null,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub text: String,
    pub anchor: Anchor,
}

impl Span {
    pub fn boxed(text: impl Into<String>, q: QuantBox) -> Self {
        Self {
            text: text.into(),
            anchor: Anchor::Box(q),
        }
    }

    pub fn unboxed(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            anchor: Anchor::Absent,
        }
    }

    pub fn quant_box(&self) -> Option<QuantBox> {
        match self.anchor {
            Anchor::Box(q) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Plain(String),
    Grounded(Span),
    Region(QuantBox),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundedText {
    pub segments: Vec<Segment>,
}

impl GroundedText {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn plain(text: impl Into<String>) -> Self {
        let mut doc = Self::default();
        doc.push_plain(&text.into());
        doc
    }

    /// Appends text, merging with a trailing plain segment.
    pub fn push_plain(&mut self, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Segment::Plain(prev)) = self.segments.last_mut() {
            prev.push_str(text);
        } else {
            self.segments.push(Segment::Plain(text.to_string()));
        }
    }

    pub fn push(&mut self, seg: Segment) {
        match seg {
            Segment::Plain(t) => self.push_plain(&t),
            other => self.segments.push(other),
        }
    }

    pub fn spans(&self) -> impl Iterator<Item = &Span> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Grounded(span) => Some(span),
            _ => None,
        })
    }

    /// True when any `<bbox>` group is present (span box, null box or region).
    pub fn has_bbox_group(&self) -> bool {
        self.segments.iter().any(|s| match s {
            Segment::Region(_) => true,
            Segment::Grounded(span) => span.anchor != Anchor::Absent,
            Segment::Plain(_) => false,
        })
    }

    pub fn is_plain(&self) -> bool {
        self.segments.iter().all(|s| matches!(s, Segment::Plain(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    OcrOpen,
    OcrClose,
    BboxOpen,
    BboxClose,
}

impl Tag {
    fn len(self) -> usize {
        match self {
            Tag::OcrOpen => OCR_OPEN.len(),
            Tag::OcrClose => OCR_CLOSE.len(),
            Tag::BboxOpen => BBOX_OPEN.len(),
            Tag::BboxClose => BBOX_CLOSE.len(),
        }
    }
}

fn next_tag(raw: &str, from: usize) -> Option<(usize, Tag)> {
    let mut i = from;
    while let Some(rel) = raw[i..].find('<') {
        let pos = i + rel;
        let rest = &raw[pos..];
        let tag = if rest.starts_with(OCR_OPEN) {
            Some(Tag::OcrOpen)
        } else if rest.starts_with(OCR_CLOSE) {
            Some(Tag::OcrClose)
        } else if rest.starts_with(BBOX_OPEN) {
            Some(Tag::BboxOpen)
        } else if rest.starts_with(BBOX_CLOSE) {
            Some(Tag::BboxClose)
        } else {
            None
        };
        if let Some(t) = tag {
            return Some((pos, t));
        }
        i = pos + 1;
    }
    None
}

/// Body of a `<bbox>` group.
enum BoxBody {
    Quant(QuantBox),
    Null,
}

fn parse_box_body(body: &str) -> Result<BoxBody, DefectKind> {
    let trimmed = body.trim();
    if trimmed == "null" {
        return Ok(BoxBody::Null);
    }
    let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(DefectKind::BadArity);
    }
    let mut vals = [0i64; 4];
    for (slot, p) in vals.iter_mut().zip(&parts) {
        let digits = p.strip_prefix(['-', '+']).unwrap_or(p);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(DefectKind::NonNumeric);
        }
        // Overlong digit strings are numeric but out of range.
        *slot = p.parse::<i64>().unwrap_or(i64::MAX);
    }
    if vals.iter().any(|v| !(0..=i64::from(QUANT_MAX)).contains(v)) {
        return Err(DefectKind::OutOfRange);
    }
    QuantBox::new(vals[0], vals[1], vals[2], vals[3])
        .map(BoxBody::Quant)
        .map_err(|_| DefectKind::OutOfRange)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BoxTarget {
    Attach,
    Region,
    Orphan,
}

enum State {
    Outside,
    InOcr { start: usize, depth: usize },
    InBbox { start: usize, target: BoxTarget },
}

/// Per-segment source offsets: segment start and, when present, the start of
/// its `<bbox>` group.
#[derive(Debug, Clone, Copy)]
struct SegOffsets {
    start: usize,
    group: Option<usize>,
}

struct Parsed {
    doc: GroundedText,
    offsets: Vec<SegOffsets>,
}

fn parse_inner(raw: &str) -> Result<Parsed, Vec<FormatDefect>> {
    let mut segs: Vec<Segment> = Vec::new();
    let mut offs: Vec<SegOffsets> = Vec::new();
    let mut defects = Vec::new();
    let mut pending = String::new();
    let mut pending_start = 0usize;
    let mut state = State::Outside;
    let mut cursor = 0usize;

    let flush = |pending: &mut String, start: usize, segs: &mut Vec<Segment>, offs: &mut Vec<SegOffsets>| {
        if !pending.is_empty() {
            segs.push(Segment::Plain(std::mem::take(pending)));
            offs.push(SegOffsets { start, group: None });
        }
    };

    loop {
        let next = next_tag(raw, cursor);
        match state {
            State::Outside => {
                let end = next.map_or(raw.len(), |(p, _)| p);
                if pending.is_empty() {
                    pending_start = cursor;
                }
                pending.push_str(&raw[cursor..end]);
                let Some((pos, tag)) = next else {
                    flush(&mut pending, pending_start, &mut segs, &mut offs);
                    break;
                };
                cursor = pos + tag.len();
                match tag {
                    Tag::OcrOpen => {
                        flush(&mut pending, pending_start, &mut segs, &mut offs);
                        state = State::InOcr { start: pos, depth: 1 };
                    }
                    Tag::OcrClose | Tag::BboxClose => {
                        defects.push(FormatDefect {
                            kind: DefectKind::UnclosedTag,
                            offset: pos,
                        });
                    }
                    Tag::BboxOpen => {
                        let ws_only = pending.chars().all(char::is_whitespace);
                        let target = match segs.last() {
                            Some(Segment::Grounded(span)) if ws_only && span.anchor == Anchor::Absent => {
                                BoxTarget::Attach
                            }
                            Some(Segment::Grounded(_)) | Some(Segment::Region(_)) if ws_only => BoxTarget::Orphan,
                            _ => BoxTarget::Region,
                        };
                        match target {
                            BoxTarget::Attach => pending.clear(),
                            BoxTarget::Orphan => defects.push(FormatDefect {
                                kind: DefectKind::OrphanBBox,
                                offset: pos,
                            }),
                            BoxTarget::Region => flush(&mut pending, pending_start, &mut segs, &mut offs),
                        }
                        state = State::InBbox { start: pos, target };
                    }
                }
            }
            State::InOcr { start, depth } => {
                let content = start + OCR_OPEN.len();
                match next {
                    None => {
                        defects.push(FormatDefect {
                            kind: DefectKind::UnclosedTag,
                            offset: start,
                        });
                        break;
                    }
                    Some((pos, Tag::OcrOpen)) => {
                        defects.push(FormatDefect {
                            kind: DefectKind::NestedTag,
                            offset: pos,
                        });
                        cursor = pos + OCR_OPEN.len();
                        state = State::InOcr { start, depth: depth + 1 };
                    }
                    Some((pos, Tag::OcrClose)) => {
                        cursor = pos + OCR_CLOSE.len();
                        if depth > 1 {
                            state = State::InOcr { start, depth: depth - 1 };
                        } else {
                            segs.push(Segment::Grounded(Span::unboxed(&raw[content..pos])));
                            offs.push(SegOffsets { start, group: None });
                            pending_start = cursor;
                            state = State::Outside;
                        }
                    }
                    Some((pos, _)) => {
                        // A box tag inside a span: the span was never closed.
                        defects.push(FormatDefect {
                            kind: DefectKind::UnclosedTag,
                            offset: start,
                        });
                        segs.push(Segment::Grounded(Span::unboxed(&raw[content..pos])));
                        offs.push(SegOffsets { start, group: None });
                        cursor = pos;
                        pending_start = pos;
                        state = State::Outside;
                    }
                }
            }
            State::InBbox { start, target } => {
                let content = start + BBOX_OPEN.len();
                match next {
                    Some((pos, Tag::BboxClose)) => {
                        cursor = pos + BBOX_CLOSE.len();
                        pending_start = cursor;
                        match parse_box_body(&raw[content..pos]) {
                            Err(kind) => defects.push(FormatDefect { kind, offset: start }),
                            Ok(body) => match target {
                                BoxTarget::Attach => {
                                    if let (Some(Segment::Grounded(span)), Some(off)) = (segs.last_mut(), offs.last_mut()) {
                                        span.anchor = match body {
                                            BoxBody::Quant(q) => Anchor::Box(q),
                                            BoxBody::Null => Anchor::Null,
                                        };
                                        off.group = Some(start);
                                    }
                                }
                                BoxTarget::Region => match body {
                                    BoxBody::Quant(q) => {
                                        segs.push(Segment::Region(q));
                                        offs.push(SegOffsets {
                                            start,
                                            group: Some(start),
                                        });
                                    }
                                    BoxBody::Null => defects.push(FormatDefect {
                                        kind: DefectKind::NullBBox,
                                        offset: start,
                                    }),
                                },
                                BoxTarget::Orphan => {}
                            },
                        }
                        state = State::Outside;
                    }
                    Some((pos, _)) => {
                        defects.push(FormatDefect {
                            kind: DefectKind::UnclosedTag,
                            offset: start,
                        });
                        cursor = pos;
                        pending_start = pos;
                        state = State::Outside;
                    }
                    None => {
                        defects.push(FormatDefect {
                            kind: DefectKind::UnclosedTag,
                            offset: start,
                        });
                        break;
                    }
                }
            }
        }
    }

    if defects.is_empty() {
        Ok(Parsed {
            doc: GroundedText { segments: segs },
            offsets: offs,
        })
    } else {
        defects.sort_by_key(|d| d.offset);
        Err(defects)
    }
}

/// Parses grounded markup, collecting every defect rather than stopping at
/// the first. Spans without a box and `null` boxes are accepted here.
pub fn parse(raw: &str) -> Result<GroundedText, Vec<FormatDefect>> {
    parse_inner(raw).map(|p| p.doc)
}

/// Requirements applied on top of [`parse`] for finished samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrictRules {
    /// Whether bare `<bbox>` regions are legal (questions: yes, answers: no).
    pub allow_regions: bool,
}

/// Parses and additionally requires every span to carry a real box:
/// `null` boxes become [`DefectKind::NullBBox`], missing boxes
/// [`DefectKind::MissingBBox`], and disallowed regions [`DefectKind::OrphanBBox`].
pub fn parse_strict(raw: &str, rules: StrictRules) -> Result<GroundedText, Vec<FormatDefect>> {
    let parsed = parse_inner(raw)?;
    let mut defects = Vec::new();
    for (seg, off) in parsed.doc.segments.iter().zip(&parsed.offsets) {
        match seg {
            Segment::Grounded(span) => match span.anchor {
                Anchor::Null => defects.push(FormatDefect {
                    kind: DefectKind::NullBBox,
                    offset: off.group.unwrap_or(off.start),
                }),
                Anchor::Absent => defects.push(FormatDefect {
                    kind: DefectKind::MissingBBox,
                    offset: off.start,
                }),
                Anchor::Box(_) => {}
            },
            Segment::Region(_) if !rules.allow_regions => defects.push(FormatDefect {
                kind: DefectKind::OrphanBBox,
                offset: off.start,
            }),
            _ => {}
        }
    }
    if defects.is_empty() {
        Ok(parsed.doc)
    } else {
        Err(defects)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SerializeError {
    #[error("segment {0}: grounded span has no box; degrade it first")]
    Ungrounded(usize),
    #[error("segment {0}: empty plain segment")]
    EmptyPlain(usize),
    #[error("segment {0}: adjacent plain segments")]
    AdjacentPlain(usize),
    #[error("segment {0}: text contains a markup tag")]
    TagInText(usize),
    #[error("segment {0}: region would bind to the preceding segment")]
    AmbiguousRegion(usize),
}

fn contains_tag(s: &str) -> bool {
    [OCR_OPEN, OCR_CLOSE, BBOX_OPEN, BBOX_CLOSE].iter().any(|t| s.contains(t))
}

fn check_canonical(doc: &GroundedText, allow_unboxed: bool) -> Result<(), SerializeError> {
    for (i, seg) in doc.segments.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &doc.segments[j]);
        match seg {
            Segment::Plain(t) => {
                if t.is_empty() {
                    return Err(SerializeError::EmptyPlain(i));
                }
                if matches!(prev, Some(Segment::Plain(_))) {
                    return Err(SerializeError::AdjacentPlain(i));
                }
                if contains_tag(t) {
                    return Err(SerializeError::TagInText(i));
                }
            }
            Segment::Grounded(span) => {
                if contains_tag(&span.text) {
                    return Err(SerializeError::TagInText(i));
                }
                match span.anchor {
                    Anchor::Box(_) => {}
                    Anchor::Absent if allow_unboxed => {}
                    _ => return Err(SerializeError::Ungrounded(i)),
                }
            }
            Segment::Region(_) => {
                // Parse binds a box to whatever group-bearing segment precedes
                // it across whitespace, so such a layout cannot round-trip.
                let mut k = i;
                let mut before = prev;
                if let Some(Segment::Plain(t)) = before {
                    if t.chars().all(char::is_whitespace) {
                        k -= 1;
                        before = k.checked_sub(1).map(|j| &doc.segments[j]);
                    } else {
                        before = None;
                    }
                }
                if matches!(before, Some(Segment::Grounded(_)) | Some(Segment::Region(_))) {
                    return Err(SerializeError::AmbiguousRegion(i));
                }
            }
        }
    }
    Ok(())
}

fn write_segments(doc: &GroundedText) -> String {
    let mut out = String::new();
    for seg in &doc.segments {
        match seg {
            Segment::Plain(t) => out.push_str(t),
            Segment::Grounded(span) => {
                out.push_str(OCR_OPEN);
                out.push_str(&span.text);
                out.push_str(OCR_CLOSE);
                match span.anchor {
                    Anchor::Box(q) => {
                        out.push_str(BBOX_OPEN);
                        out.push_str(&q.to_string());
                        out.push_str(BBOX_CLOSE);
                    }
                    Anchor::Null => {
                        out.push_str(BBOX_OPEN);
                        out.push_str("null");
                        out.push_str(BBOX_CLOSE);
                    }
                    Anchor::Absent => {}
                }
            }
            Segment::Region(q) => {
                out.push_str(BBOX_OPEN);
                out.push_str(&q.to_string());
                out.push_str(BBOX_CLOSE);
            }
        }
    }
    out
}

/// Canonical serialization of a fully grounded document.
pub fn serialize(doc: &GroundedText) -> Result<String, SerializeError> {
    check_canonical(doc, false)?;
    Ok(write_segments(doc))
}

/// Like [`serialize`] but permits box-less spans, written as `<ocr>text</ocr>`
/// (recognition targets and generated text awaiting annotation).
pub fn serialize_partial(doc: &GroundedText) -> Result<String, SerializeError> {
    check_canonical(doc, true)?;
    Ok(write_segments(doc))
}

/// Writes whatever the document holds without structural checks.
pub fn render(doc: &GroundedText) -> String {
    write_segments(doc)
}

/// Plain text with every span reduced to its text. Regions carry no text and
/// vanish.
pub fn strip_grounding(doc: &GroundedText) -> String {
    let mut out = String::new();
    for seg in &doc.segments {
        match seg {
            Segment::Plain(t) => out.push_str(t),
            Segment::Grounded(span) => out.push_str(&span.text),
            Segment::Region(_) => {}
        }
    }
    out
}

/// Turns spans with a `null` box or no box into plain text.
pub fn degrade_null(doc: &GroundedText) -> GroundedText {
    let mut out = GroundedText::default();
    for seg in &doc.segments {
        match seg {
            Segment::Grounded(span) if span.quant_box().is_none() => out.push_plain(&span.text),
            other => out.push(other.clone()),
        }
    }
    out
}

/// Grounded spans with dequantized boxes, in document order.
pub fn extract_spans(doc: &GroundedText) -> Vec<(String, BBox)> {
    doc.spans()
        .filter_map(|s| s.quant_box().map(|q| (s.text.clone(), q.dequantize())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64, c: i64, d: i64) -> QuantBox {
        QuantBox::new(a, b, c, d).unwrap()
    }

    fn kinds(raw: &str) -> Vec<(DefectKind, usize)> {
        parse(raw).unwrap_err().into_iter().map(|d| (d.kind, d.offset)).collect()
    }

    #[test]
    fn parses_spaced_box() {
        let doc = parse("<ocr>Hello</ocr><bbox>100, 200, 300, 400</bbox>").unwrap();
        assert_eq!(doc.segments, vec![Segment::Grounded(Span::boxed("Hello", q(100, 200, 300, 400)))]);
    }

    #[test]
    fn parses_irregular_spacing_between_tags() {
        let doc = parse("<ocr> text </ocr> <bbox> 1, 2 ,3 ,4 </bbox>").unwrap();
        assert_eq!(doc.segments, vec![Segment::Grounded(Span::boxed(" text ", q(1, 2, 3, 4)))]);
    }

    #[test]
    fn plain_only() {
        assert_eq!(parse("just text").unwrap().segments, vec![Segment::Plain("just text".into())]);
        assert!(parse("").unwrap().segments.is_empty());
    }

    #[test]
    fn bad_arity_at_bbox_start() {
        assert_eq!(kinds("<ocr>A</ocr><bbox>1,2,3</bbox>"), vec![(DefectKind::BadArity, 12)]);
        assert_eq!(kinds("<ocr>A</ocr><bbox></bbox>"), vec![(DefectKind::BadArity, 12)]);
    }

    #[test]
    fn defect_kinds() {
        assert_eq!(kinds("<ocr>A</ocr><bbox>1,x,3,4</bbox>"), vec![(DefectKind::NonNumeric, 12)]);
        assert_eq!(kinds("<ocr>A</ocr><bbox>1,2.5,3,4</bbox>"), vec![(DefectKind::NonNumeric, 12)]);
        assert_eq!(kinds("<ocr>A</ocr><bbox>1,2,1000,4</bbox>"), vec![(DefectKind::OutOfRange, 12)]);
        assert_eq!(kinds("<ocr>A</ocr><bbox>-1,2,3,4</bbox>"), vec![(DefectKind::OutOfRange, 12)]);
        assert_eq!(kinds("<ocr>A</ocr><bbox>9,2,3,4</bbox>"), vec![(DefectKind::OutOfRange, 12)]);
        assert_eq!(kinds("<ocr>A</ocr><bbox>1,2,3,4"), vec![(DefectKind::UnclosedTag, 12)]);
        assert_eq!(kinds("x <ocr>A"), vec![(DefectKind::UnclosedTag, 2)]);
        assert_eq!(kinds("<ocr>A<ocr>B</ocr></ocr>"), vec![(DefectKind::NestedTag, 6)]);
        assert_eq!(
            kinds("<ocr>A</ocr><bbox>1,2,3,4</bbox><bbox>1,2,3,4</bbox>"),
            vec![(DefectKind::OrphanBBox, 32)]
        );
        assert_eq!(kinds("see <bbox>null</bbox>"), vec![(DefectKind::NullBBox, 4)]);
        assert_eq!(kinds("a </ocr> b"), vec![(DefectKind::UnclosedTag, 2)]);
    }

    #[test]
    fn missing_ocr_close_before_box() {
        // `<ocr>A<bbox>..` reports the open span, then parses the box as a region.
        assert_eq!(kinds("<ocr>A<bbox>1,2,3,4</bbox>"), vec![(DefectKind::UnclosedTag, 0)]);
    }

    #[test]
    fn collects_all_defects_in_offset_order() {
        let d = kinds("<ocr>A</ocr><bbox>1,2</bbox> and <ocr>B</ocr><bbox>a,b,c,d</bbox> <ocr>C");
        assert_eq!(
            d,
            vec![(DefectKind::BadArity, 12), (DefectKind::NonNumeric, 45), (DefectKind::UnclosedTag, 66)]
        );
    }

    #[test]
    fn regions_and_unboxed_spans() {
        let doc = parse("What is in <bbox>1,2,3,4</bbox>?").unwrap();
        assert_eq!(
            doc.segments,
            vec![
                Segment::Plain("What is in ".into()),
                Segment::Region(q(1, 2, 3, 4)),
                Segment::Plain("?".into())
            ]
        );
        assert!(doc.has_bbox_group());
        let doc = parse("<ocr>Total</ocr> is 5").unwrap();
        assert_eq!(doc.segments[0], Segment::Grounded(Span::unboxed("Total")));
        assert!(!doc.has_bbox_group());
    }

    #[test]
    fn strict_rules() {
        let rules = StrictRules { allow_regions: false };
        let err = parse_strict("<ocr>42</ocr><bbox>null</bbox>", rules).unwrap_err();
        assert_eq!(err, vec![FormatDefect { kind: DefectKind::NullBBox, offset: 13 }]);
        let err = parse_strict("x <ocr>42</ocr>", rules).unwrap_err();
        assert_eq!(err, vec![FormatDefect { kind: DefectKind::MissingBBox, offset: 2 }]);
        let err = parse_strict("at <bbox>1,2,3,4</bbox>", rules).unwrap_err();
        assert_eq!(err[0].kind, DefectKind::OrphanBBox);
        assert!(parse_strict("at <bbox>1,2,3,4</bbox>", StrictRules { allow_regions: true }).is_ok());
    }

    #[test]
    fn serialize_examples() {
        let d = GroundedText::new(vec![Segment::Grounded(Span::boxed("X", q(1, 2, 3, 4)))]);
        assert_eq!(serialize(&d).unwrap(), "<ocr>X</ocr><bbox>1,2,3,4</bbox>");
        let d = GroundedText::new(vec![
            Segment::Plain("a".into()),
            Segment::Grounded(Span::boxed("b", q(0, 0, 999, 999))),
        ]);
        assert_eq!(serialize(&d).unwrap(), "a<ocr>b</ocr><bbox>0,0,999,999</bbox>");
    }

    #[test]
    fn serialize_rejects_noncanonical() {
        let d = GroundedText::new(vec![Segment::Grounded(Span::unboxed("X"))]);
        assert_eq!(serialize(&d), Err(SerializeError::Ungrounded(0)));
        assert_eq!(serialize_partial(&d).unwrap(), "<ocr>X</ocr>");
        let d = GroundedText::new(vec![
            Segment::Grounded(Span::boxed("X", q(1, 2, 3, 4))),
            Segment::Plain(" ".into()),
            Segment::Region(q(1, 2, 3, 4)),
        ]);
        assert_eq!(serialize(&d), Err(SerializeError::AmbiguousRegion(2)));
        let d = GroundedText::new(vec![Segment::Plain("a<ocr>".into())]);
        assert_eq!(serialize(&d), Err(SerializeError::TagInText(0)));
    }

    #[test]
    fn strip_examples() {
        let d = GroundedText::new(vec![Segment::Grounded(Span::boxed("Paris", q(10, 10, 90, 30)))]);
        assert_eq!(strip_grounding(&d), "Paris");
        let d = GroundedText::new(vec![
            Segment::Plain("in ".into()),
            Segment::Grounded(Span::boxed("1999", q(5, 5, 50, 20))),
            Segment::Plain(".".into()),
        ]);
        let s = strip_grounding(&d);
        assert_eq!(s, "in 1999.");
        assert!(parse(&s).unwrap().is_plain());
    }

    #[test]
    fn degrade_examples() {
        let d = parse("<ocr>42</ocr><bbox>null</bbox>").unwrap();
        assert_eq!(degrade_null(&d).segments, vec![Segment::Plain("42".into())]);

        let clean = parse("a <ocr>b</ocr><bbox>1,2,3,4</bbox> c").unwrap();
        assert_eq!(degrade_null(&clean), clean);

        let mixed = parse("<ocr>1</ocr><bbox>null</bbox>, <ocr>2</ocr><bbox>5,5,9,9</bbox> and <ocr>3</ocr><bbox>null</bbox>").unwrap();
        let out = degrade_null(&mixed);
        assert_eq!(
            out.segments,
            vec![
                Segment::Plain("1, ".into()),
                Segment::Grounded(Span::boxed("2", q(5, 5, 9, 9))),
                Segment::Plain(" and 3".into()),
            ]
        );
        assert_eq!(strip_grounding(&out), strip_grounding(&mixed));
    }

    #[test]
    fn extract_examples() {
        assert!(extract_spans(&parse("plain").unwrap()).is_empty());
        let one = extract_spans(&parse("<ocr>a</ocr><bbox>0,0,9,9</bbox>").unwrap());
        assert_eq!(one.len(), 1);
        assert!((one[0].1.x2() - 0.0095).abs() < 1e-12);

        let doc = parse(
            "The total is <ocr>$42</ocr><bbox>10,20,30,40</bbox>, from <ocr>Q1</ocr><bbox>1,1,5,5</bbox> and <ocr>Q2</ocr><bbox>6,6,9,9</bbox>.",
        )
        .unwrap();
        let texts: Vec<String> = extract_spans(&doc).into_iter().map(|(t, _)| t).collect();
        assert_eq!(texts, vec!["$42", "Q1", "Q2"]);
    }
}
