//! Merging an ordered-but-incomplete block list (layout-model output) with an
//! unordered-but-complete one (raw PDF text extraction) into a single reading
//! order.
//!
//! Pipeline: drop duplicates and swap truncated runs for their complete
//! block; cut the ordered list into *ordered areas* (runs laid out top-left to
//! bottom-right); insert leftover blocks into the area containing their
//! center, or next to their nearest ordered block otherwise; finally re-sort
//! each area column-major until the order is stable.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::text::{normalize, similarity};

/// Cap on area re-sorting passes; real pages settle in one or two.
const SETTLE_PASSES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Ordered,
    Unordered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Word,
    Phrase,
    Line,
    Paragraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub text: String,
    pub bbox: BBox,
    pub source: Source,
    pub granularity: Granularity,
}

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("block {0:?} has empty text")]
    EmptyText(String),
    #[error("merge config field {0} = {1} is outside [0, 1]")]
    BadConfig(&'static str, f64),
}

impl Block {
    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.text.trim().is_empty() {
            return Err(LayoutError::EmptyText(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    /// IoU at or above which an unordered block may duplicate an ordered one.
    pub dup_iou: f64,
    /// Text similarity at or above which the pair counts as a duplicate.
    pub dup_text_sim: f64,
    /// IoU between a truncated run's union and its complete block.
    pub trunc_iou: f64,
    /// Slack for the top-left to bottom-right placement test.
    pub eps: f64,
    /// Horizontal overlap, relative to the narrower block, that joins a column.
    pub col_overlap: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            dup_iou: 0.5,
            dup_text_sim: 0.8,
            trunc_iou: 0.5,
            eps: 0.01,
            col_overlap: 0.5,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<(), LayoutError> {
        for (name, v) in [
            ("dup_iou", self.dup_iou),
            ("dup_text_sim", self.dup_text_sim),
            ("trunc_iou", self.trunc_iou),
            ("eps", self.eps),
            ("col_overlap", self.col_overlap),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LayoutError::BadConfig(name, v));
            }
        }
        Ok(())
    }
}

/// A run of at least two consecutive ordered blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedArea {
    pub members: Range<usize>,
    pub region: BBox,
}

fn is_duplicate(o: &Block, u: &Block, cfg: &MergeConfig) -> bool {
    o.bbox.iou(&u.bbox) >= cfg.dup_iou && similarity(&o.text, &u.text) >= cfg.dup_text_sim
}

/// Removes unordered duplicates of ordered blocks and replaces truncated
/// ordered runs by the complete unordered block. Returns the updated ordered
/// list and the unordered blocks still to be placed.
pub fn dedupe_and_replace(ordered: &[Block], unordered: &[Block], cfg: &MergeConfig) -> (Vec<Block>, Vec<Block>) {
    let mut out: Vec<Block> = ordered.to_vec();
    // Parallel to `out`: true where the entry is a replacement block.
    let mut replaced: Vec<bool> = vec![false; out.len()];
    let mut preserved = Vec::new();

    for u in unordered {
        let dup_iou = ordered
            .iter()
            .filter(|o| is_duplicate(o, u, cfg))
            .map(|o| o.bbox.iou(&u.bbox))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
        let whole = normalize(&u.text);
        let fragment = |b: &Block| {
            let t = normalize(&b.text);
            !t.is_empty() && whole.contains(&t)
        };

        let mut best: Option<(Range<usize>, f64)> = None;
        let mut i = 0;
        while i < out.len() {
            if replaced[i] || !fragment(&out[i]) {
                i += 1;
                continue;
            }
            let mut j = i;
            while j < out.len() && !replaced[j] && fragment(&out[j]) {
                j += 1;
            }
            for a in i..j {
                for b in a + 1..=j {
                    let union = BBox::union_all(out[a..b].iter().map(|blk| &blk.bbox)).expect("non-empty run");
                    let v = union.iou(&u.bbox);
                    let better = match &best {
                        None => true,
                        Some((r, bv)) => v > *bv || (v == *bv && (b - a) > r.len()),
                    };
                    if better {
                        best = Some((a..b, v));
                    }
                }
            }
            i = j;
        }

        // A half of a truncated block can pass as a duplicate of the whole;
        // a longer run that fits the block better wins.
        if let Some(d) = dup_iou {
            if !matches!(&best, Some((run, v)) if run.len() >= 2 && *v >= cfg.trunc_iou && *v > d) {
                continue;
            }
        }
        match best {
            Some((run, v)) if v >= cfg.trunc_iou => {
                out.splice(run.clone(), std::iter::once(u.clone()));
                replaced.splice(run, std::iter::once(true));
            }
            _ => preserved.push(u.clone()),
        }
    }
    (out, preserved)
}

fn placed_after(a: &BBox, b: &BBox, eps: f64) -> bool {
    b.x1() >= a.x1() - eps && b.y1() >= a.y1() - eps
}

/// Maximal runs whose consecutive blocks step right and/or down.
pub fn build_ordered_areas(ordered: &[Block], cfg: &MergeConfig) -> Vec<OrderedArea> {
    let mut areas = Vec::new();
    let mut start = 0;
    for i in 1..=ordered.len() {
        let continues = i < ordered.len() && placed_after(&ordered[i - 1].bbox, &ordered[i].bbox, cfg.eps);
        if !continues {
            if i - start >= 2 {
                let region = BBox::union_all(ordered[start..i].iter().map(|b| &b.bbox)).expect("non-empty");
                areas.push(OrderedArea {
                    members: start..i,
                    region,
                });
            }
            start = i;
        }
    }
    areas
}

fn same_column(a: &BBox, b: &BBox, cfg: &MergeConfig) -> bool {
    let touching = a.x1().max(b.x1()) <= a.x2().min(b.x2());
    touching && a.horizontal_overlap(b) >= cfg.col_overlap * a.width().min(b.width())
}

/// Pairwise column-major order: top to bottom within a shared column,
/// otherwise left column first.
pub fn column_major_cmp(a: &BBox, b: &BBox, cfg: &MergeConfig) -> Ordering {
    if same_column(a, b, cfg) {
        a.y1().total_cmp(&b.y1()).then(a.x1().total_cmp(&b.x1()))
    } else {
        a.x1().total_cmp(&b.x1()).then(a.y1().total_cmp(&b.y1()))
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Column-major permutation of `boxes`: indices in reading order.
pub fn column_major_order(boxes: &[BBox], cfg: &MergeConfig) -> Vec<usize> {
    let n = boxes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if same_column(&boxes[i], &boxes[j], cfg) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut columns: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = columns.len();
            columns.push(Vec::new());
        }
        columns[slot[r]].push(i);
    }

    let key = |col: &Vec<usize>| {
        let min_x = col.iter().map(|&i| boxes[i].x1()).fold(f64::INFINITY, f64::min);
        let min_y = col.iter().map(|&i| boxes[i].y1()).fold(f64::INFINITY, f64::min);
        (min_x, min_y, col[0])
    };
    columns.sort_by(|a, b| {
        let (ax, ay, ai) = key(a);
        let (bx, by, bi) = key(b);
        ax.total_cmp(&bx).then(ay.total_cmp(&by)).then(ai.cmp(&bi))
    });

    let mut out = Vec::with_capacity(n);
    for mut col in columns {
        col.sort_by(|&i, &j| {
            let (a, b) = (&boxes[i], &boxes[j]);
            a.y1().total_cmp(&b.y1()).then(a.x1().total_cmp(&b.x1())).then(i.cmp(&j))
        });
        out.extend(col);
    }
    out
}

/// Clusters blocks into columns by transitive horizontal overlap, orders
/// columns left to right and each column top to bottom. Stable on ties.
pub fn column_major_sort(blocks: &[Block], cfg: &MergeConfig) -> Vec<Block> {
    let boxes: Vec<BBox> = blocks.iter().map(|b| b.bbox).collect();
    column_major_order(&boxes, cfg)
        .into_iter()
        .map(|i| blocks[i].clone())
        .collect()
}

/// One pass of area re-sorting.
fn resort_areas(blocks: &[Block], cfg: &MergeConfig) -> Vec<Block> {
    let areas = build_ordered_areas(blocks, cfg);
    let mut out = Vec::with_capacity(blocks.len());
    let mut i = 0;
    for area in areas {
        out.extend_from_slice(&blocks[i..area.members.start]);
        out.extend(column_major_sort(&blocks[area.members.clone()], cfg));
        i = area.members.end;
    }
    out.extend_from_slice(&blocks[i..]);
    out
}

fn same_order(a: &[Block], b: &[Block]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.id == y.id)
}

/// Re-sorts areas until the order no longer changes.
fn settle(mut blocks: Vec<Block>, cfg: &MergeConfig) -> Vec<Block> {
    for _ in 0..SETTLE_PASSES {
        let next = resort_areas(&blocks, cfg);
        if same_order(&next, &blocks) {
            return next;
        }
        blocks = next;
    }
    log::warn!("area re-sorting did not settle after {SETTLE_PASSES} passes");
    blocks
}

/// Full merge of an ordered and an unordered block list.
pub fn merge(ordered: &[Block], unordered: &[Block], cfg: &MergeConfig) -> Vec<Block> {
    let (base, preserved) = dedupe_and_replace(ordered, unordered, cfg);
    if base.is_empty() {
        return settle(column_major_sort(&preserved, cfg), cfg);
    }

    let areas = build_ordered_areas(&base, cfg);
    let mut in_area: Vec<Vec<Block>> = vec![Vec::new(); areas.len()];
    let mut before: Vec<Vec<Block>> = vec![Vec::new(); base.len()];
    let mut after: Vec<Vec<Block>> = vec![Vec::new(); base.len()];

    for p in preserved {
        let (cx, cy) = p.bbox.center();
        let host = areas
            .iter()
            .enumerate()
            .filter(|(_, a)| a.region.contains_point(cx, cy))
            .min_by(|(i, a), (j, b)| a.region.area().total_cmp(&b.region.area()).then(i.cmp(j)))
            .map(|(k, _)| k);
        if let Some(k) = host {
            in_area[k].push(p);
            continue;
        }
        // Nearest by center distance; ties go to the earlier block.
        let anchor = base
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| {
                a.bbox
                    .center_distance(&p.bbox)
                    .total_cmp(&b.bbox.center_distance(&p.bbox))
                    .then(i.cmp(j))
            })
            .map(|(i, _)| i)
            .expect("base is non-empty");
        if column_major_cmp(&p.bbox, &base[anchor].bbox, cfg) == Ordering::Less {
            before[anchor].push(p);
        } else {
            after[anchor].push(p);
        }
    }

    // Areas with their in-area insertions, each entry tagged with its base
    // index (None for inserted blocks) so out-of-area blocks find their anchor.
    let mut seq: Vec<(Block, Option<usize>)> = Vec::with_capacity(base.len());
    let mut i = 0;
    for (k, area) in areas.iter().enumerate() {
        seq.extend((i..area.members.start).map(|j| (base[j].clone(), Some(j))));
        let mut members: Vec<(Block, Option<usize>)> =
            area.members.clone().map(|j| (base[j].clone(), Some(j))).collect();
        members.extend(in_area[k].drain(..).map(|b| (b, None)));
        let boxes: Vec<BBox> = members.iter().map(|(b, _)| b.bbox).collect();
        seq.extend(column_major_order(&boxes, cfg).into_iter().map(|m| members[m].clone()));
        i = area.members.end;
    }
    seq.extend((i..base.len()).map(|j| (base[j].clone(), Some(j))));

    let mut out = Vec::new();
    for (b, tag) in seq {
        match tag {
            Some(j) => {
                out.extend(column_major_sort(&before[j], cfg));
                out.push(b);
                out.extend(column_major_sort(&after[j], cfg));
            }
            None => out.push(b),
        }
    }
    settle(out, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blk(id: &str, text: &str, b: [f64; 4], source: Source) -> Block {
        Block {
            id: id.into(),
            text: text.into(),
            bbox: BBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            source,
            granularity: Granularity::Paragraph,
        }
    }

    fn o(id: &str, text: &str, b: [f64; 4]) -> Block {
        blk(id, text, b, Source::Ordered)
    }

    fn u(id: &str, text: &str, b: [f64; 4]) -> Block {
        blk(id, text, b, Source::Unordered)
    }

    fn ids(v: &[Block]) -> Vec<&str> {
        v.iter().map(|b| b.id.as_str()).collect()
    }

    #[test]
    fn perfect_duplicate_keeps_ordered_copy() {
        let cfg = MergeConfig::default();
        let a = o("o1", "Hello world", [0.1, 0.1, 0.5, 0.2]);
        let b = u("u1", "hello  world.", [0.1, 0.1, 0.5, 0.2]);
        let (out, preserved) = dedupe_and_replace(std::slice::from_ref(&a), &[b], &cfg);
        assert_eq!(out, vec![a]);
        assert!(preserved.is_empty());
    }

    #[test]
    fn truncated_pair_replaced_by_complete_block() {
        let cfg = MergeConfig::default();
        let ordered = vec![
            o("r1", "Grounding needs precise", [0.1, 0.10, 0.5, 0.14]),
            o("r2", "bounding boxes.", [0.1, 0.14, 0.3, 0.18]),
            o("x", "Unrelated", [0.1, 0.3, 0.5, 0.4]),
        ];
        let blue = u("blue", "Grounding needs precise bounding boxes.", [0.1, 0.10, 0.5, 0.18]);
        let (out, preserved) = dedupe_and_replace(&ordered, &[blue], &cfg);
        assert_eq!(ids(&out), vec!["blue", "x"]);
        assert!(preserved.is_empty());
    }

    #[test]
    fn truncation_beats_lookalike_half() {
        // "bakery music" alone scores IoU 0.5 and similarity 0.8 against the
        // whole block, enough to pass as its duplicate.
        let cfg = MergeConfig::default();
        let ordered = vec![
            o("h1", "chart", [0.5, 0.15, 0.9, 0.2]),
            o("h2", "bakery music", [0.5, 0.2, 0.9, 0.25]),
        ];
        let whole = u("w", "chart bakery music", [0.5, 0.15, 0.9, 0.25]);
        let (out, preserved) = dedupe_and_replace(&ordered, &[whole], &cfg);
        assert_eq!(ids(&out), vec!["w"]);
        assert!(preserved.is_empty());
    }

    #[test]
    fn missing_table_is_preserved() {
        let cfg = MergeConfig::default();
        let ordered = vec![o("p", "Body text", [0.1, 0.1, 0.9, 0.3])];
        let table = u("t", "Table 1: results", [0.1, 0.5, 0.9, 0.7]);
        let (out, preserved) = dedupe_and_replace(&ordered, std::slice::from_ref(&table), &cfg);
        assert_eq!(ids(&out), vec!["p"]);
        assert_eq!(preserved, vec![table]);
    }

    #[test]
    fn empty_inputs() {
        let cfg = MergeConfig::default();
        let (a, b) = dedupe_and_replace(&[], &[], &cfg);
        assert!(a.is_empty() && b.is_empty());
        assert!(merge(&[], &[], &cfg).is_empty());
    }

    #[test]
    fn areas() {
        let cfg = MergeConfig::default();
        let col = vec![
            o("a", "a", [0.1, 0.1, 0.4, 0.2]),
            o("b", "b", [0.1, 0.3, 0.4, 0.4]),
            o("c", "c", [0.1, 0.5, 0.4, 0.6]),
        ];
        let areas = build_ordered_areas(&col, &cfg);
        assert_eq!(areas.len(), 1);
        assert_eq!(areas[0].members, 0..3);
        assert_eq!(areas[0].region.to_array(), [0.1, 0.1, 0.4, 0.6]);

        let jump = vec![
            o("a", "a", [0.1, 0.1, 0.4, 0.2]),
            o("b", "b", [0.1, 0.3, 0.4, 0.4]),
            o("c", "c", [0.5, 0.1, 0.9, 0.2]),
            o("d", "d", [0.5, 0.3, 0.9, 0.4]),
        ];
        let areas = build_ordered_areas(&jump, &cfg);
        assert_eq!(areas.iter().map(|a| a.members.clone()).collect::<Vec<_>>(), vec![0..2, 2..4]);

        assert!(build_ordered_areas(&col[..1], &cfg).is_empty());
    }

    #[test]
    fn eps_tolerates_slight_misalignment() {
        let cfg = MergeConfig::default();
        let v = vec![o("a", "a", [0.105, 0.1, 0.4, 0.2]), o("b", "b", [0.1, 0.3, 0.4, 0.4])];
        assert_eq!(build_ordered_areas(&v, &cfg).len(), 1);
    }

    #[test]
    fn column_major_two_columns() {
        let cfg = MergeConfig::default();
        let scan = vec![
            o("l1", "l1", [0.05, 0.1, 0.45, 0.2]),
            o("r1", "r1", [0.55, 0.1, 0.95, 0.2]),
            o("l2", "l2", [0.05, 0.3, 0.45, 0.4]),
            o("r2", "r2", [0.55, 0.3, 0.95, 0.4]),
        ];
        assert_eq!(ids(&column_major_sort(&scan, &cfg)), vec!["l1", "l2", "r1", "r2"]);
    }

    #[test]
    fn column_major_single_column_and_ties() {
        let cfg = MergeConfig::default();
        let v = vec![
            o("c", "c", [0.1, 0.5, 0.4, 0.6]),
            o("a", "a", [0.1, 0.1, 0.4, 0.2]),
            o("b", "b", [0.1, 0.3, 0.4, 0.4]),
        ];
        assert_eq!(ids(&column_major_sort(&v, &cfg)), vec!["a", "b", "c"]);
        let same: Vec<Block> = ["x", "y", "z"].iter().map(|i| o(i, i, [0.2, 0.2, 0.3, 0.3])).collect();
        assert_eq!(ids(&column_major_sort(&same, &cfg)), vec!["x", "y", "z"]);
    }

    #[test]
    fn merge_degenerate_inputs() {
        let cfg = MergeConfig::default();
        let ordered = vec![
            o("t", "Title", [0.1, 0.05, 0.9, 0.1]),
            o("a", "A", [0.1, 0.2, 0.5, 0.3]),
            o("side", "Side", [0.6, 0.1, 0.9, 0.15]),
        ];
        assert_eq!(merge(&ordered, &[], &cfg), ordered);

        let unordered = vec![
            u("r", "R", [0.6, 0.1, 0.9, 0.2]),
            u("l", "L", [0.1, 0.1, 0.4, 0.2]),
            u("l2", "L2", [0.1, 0.3, 0.4, 0.4]),
        ];
        assert_eq!(merge(&[], &unordered, &cfg), column_major_sort(&unordered, &cfg));
    }

    #[test]
    fn out_of_area_block_goes_next_to_nearest() {
        let cfg = MergeConfig::default();
        let ordered = vec![o("a", "A", [0.1, 0.1, 0.4, 0.2]), o("b", "B", [0.1, 0.3, 0.4, 0.4])];
        // Above the area, same column: lands before its nearest block.
        let head = u("h", "Header", [0.1, 0.01, 0.4, 0.04]);
        let out = merge(&ordered, &[head], &cfg);
        assert_eq!(ids(&out), vec!["h", "a", "b"]);
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig::default().validate().is_ok());
        let bad = MergeConfig {
            eps: 1.5,
            ..MergeConfig::default()
        };
        assert_eq!(bad.validate(), Err(LayoutError::BadConfig("eps", 1.5)));
        let cfg: MergeConfig = serde_json::from_str(r#"{"dup_iou": 0.7}"#).unwrap();
        assert_eq!(cfg.dup_iou, 0.7);
        assert_eq!(cfg.trunc_iou, 0.5);
    }
}
