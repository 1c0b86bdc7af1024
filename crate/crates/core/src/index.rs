//! Line-level text lookup over a page, used to ground generated text and to
//! check grounded spans against annotations.

use crate::dataset::Page;
use crate::geometry::{BBox, QuantBox};
use crate::text::{normalize, word_bounded_matches};

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedLine {
    /// Index of the source block in reading order.
    pub block: usize,
    /// Normalized line text.
    pub text: String,
    pub bbox: BBox,
}

/// One place a query occurs: a line, or consecutive lines of one block when
/// the text wraps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Reading-order position of the first matched line.
    pub position: usize,
    /// Position of the last matched line.
    pub last: usize,
    pub bbox: BBox,
    pub multiline: bool,
}

impl Candidate {
    pub fn key(&self) -> (usize, usize) {
        (self.position, self.last)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TextIndex {
    lines: Vec<IndexedLine>,
}

/// Splits a block into its `\n`-separated lines, giving each an equal slice
/// of the block height.
fn split_lines(text: &str, bbox: &BBox) -> Vec<(String, BBox)> {
    let parts: Vec<&str> = text.split('\n').collect();
    let n = parts.len() as f64;
    let h = bbox.height();
    parts
        .iter()
        .enumerate()
        .filter_map(|(k, part)| {
            let t = normalize(part);
            if t.is_empty() {
                return None;
            }
            let y1 = bbox.y1() + h * k as f64 / n;
            let y2 = if k + 1 == parts.len() {
                bbox.y2()
            } else {
                bbox.y1() + h * (k + 1) as f64 / n
            };
            let line = BBox::new(bbox.x1(), y1, bbox.x2(), y2.max(y1)).expect("slice of a valid box");
            Some((t, line))
        })
        .collect()
}

impl TextIndex {
    /// Builds from blocks given in reading order.
    pub fn from_blocks<'a, I>(blocks: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, BBox)>,
    {
        let mut lines = Vec::new();
        for (b, (text, bbox)) in blocks.into_iter().enumerate() {
            for (t, line) in split_lines(text, &bbox) {
                lines.push(IndexedLine {
                    block: b,
                    text: t,
                    bbox: line,
                });
            }
        }
        Self { lines }
    }

    pub fn build(page: &Page) -> Self {
        match page {
            Page::Poster(p) => Self::from_blocks(p.text_with_box.iter().map(|tb| (tb.text.as_str(), tb.bbox.dequantize()))),
            Page::Chart(c) => Self::from_blocks(
                c.items()
                    .filter_map(|item| item.bbox.map(|q| (item.text.as_str(), q.dequantize()))),
            ),
            Page::Pdf(p) => Self::from_blocks(p.blocks.iter().map(|b| (b.text.as_str(), b.bbox))),
        }
    }

    pub fn lines(&self) -> &[IndexedLine] {
        &self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Every occurrence of `query` (normalized, word-bounded) in reading order.
    pub fn query(&self, query: &str) -> Vec<Candidate> {
        let q = normalize(query);
        if q.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Candidate> = Vec::new();
        let mut start = 0;
        while start < self.lines.len() {
            let block = self.lines[start].block;
            let mut end = start;
            while end < self.lines.len() && self.lines[end].block == block {
                end += 1;
            }
            let mut joined = String::new();
            let mut offsets = Vec::with_capacity(end - start);
            for line in &self.lines[start..end] {
                if !joined.is_empty() {
                    joined.push(' ');
                }
                offsets.push(joined.len());
                joined.push_str(&line.text);
            }
            let line_at = |byte: usize| start + offsets.partition_point(|&o| o <= byte) - 1;
            for m in word_bounded_matches(&joined, &q) {
                let first = line_at(m);
                let last = line_at(m + q.len() - 1);
                if out.iter().any(|c| c.key() == (first, last)) {
                    continue;
                }
                let bbox = BBox::union_all(self.lines[first..=last].iter().map(|l| &l.bbox)).expect("non-empty");
                out.push(Candidate {
                    position: first,
                    last,
                    bbox,
                    multiline: first != last,
                });
            }
            start = end;
        }
        out
    }

    /// Whether `q` is the quantized box of some line or wrapped-line union.
    pub fn has_box(&self, q: &QuantBox) -> bool {
        self.lines.iter().any(|l| l.bbox.quantize() == *q)
            || self.lines.windows(2).enumerate().any(|(i, _)| {
                (i + 1..self.lines.len())
                    .take_while(|&j| self.lines[j].block == self.lines[i].block)
                    .any(|j| {
                        BBox::union_all(self.lines[i..=j].iter().map(|l| &l.bbox))
                            .map(|b| b.quantize() == *q)
                            .unwrap_or(false)
                    })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn unique_line_hit() {
        let idx = TextIndex::from_blocks([("Total: 42", bb(0.1, 0.1, 0.3, 0.12)), ("Other", bb(0.1, 0.2, 0.3, 0.22))]);
        let c = idx.query("Total: 42");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].bbox, bb(0.1, 0.1, 0.3, 0.12));
        assert!(!c[0].multiline);
    }

    #[test]
    fn repeated_text_in_reading_order() {
        let idx = TextIndex::from_blocks([
            ("Revenue", bb(0.1, 0.1, 0.3, 0.12)),
            ("Cost", bb(0.1, 0.2, 0.3, 0.22)),
            ("Revenue", bb(0.5, 0.1, 0.7, 0.12)),
        ]);
        let c = idx.query("revenue");
        assert_eq!(c.iter().map(|c| c.position).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn wrapped_query_unions_lines() {
        let idx = TextIndex::from_blocks([("The quick brown\nfox jumps over", bb(0.1, 0.1, 0.5, 0.2))]);
        assert_eq!(idx.lines().len(), 2);
        assert!((idx.lines()[0].bbox.y2() - 0.15).abs() < 1e-12);
        let c = idx.query("brown fox");
        assert_eq!(c.len(), 1);
        assert!(c[0].multiline);
        assert_eq!(c[0].bbox, bb(0.1, 0.1, 0.5, 0.2));
        assert!(idx.has_box(&c[0].bbox.quantize()));
    }

    #[test]
    fn word_boundaries_respected() {
        let idx = TextIndex::from_blocks([("Item 142", bb(0.1, 0.1, 0.3, 0.12))]);
        assert!(idx.query("42").is_empty());
        assert_eq!(idx.query("142").len(), 1);
        assert!(idx.query("").is_empty());
    }

    #[test]
    fn lines_do_not_join_across_blocks() {
        let idx = TextIndex::from_blocks([("alpha", bb(0.1, 0.1, 0.3, 0.12)), ("beta", bb(0.1, 0.13, 0.3, 0.15))]);
        assert!(idx.query("alpha beta").is_empty());
    }
}
