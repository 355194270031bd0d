//! Grouping of word boxes into rows, page lines and text blocks.

use serde::{Deserialize, Serialize};

/// Pixel box, top-left origin, y grows downward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        BoundingBox { x0, y0, x1, y1 }
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    /// Twice the vertical center, kept integral.
    pub fn cy2(&self) -> u64 {
        self.y0 as u64 + self.y1 as u64
    }

    /// Twice the horizontal center, kept integral.
    pub fn cx2(&self) -> u64 {
        self.x0 as u64 + self.x1 as u64
    }

    pub fn union(&self, o: &BoundingBox) -> BoundingBox {
        BoundingBox { x0: self.x0.min(o.x0), y0: self.y0.min(o.y0), x1: self.x1.max(o.x1), y1: self.y1.max(o.y1) }
    }

    pub fn overlaps(&self, o: &BoundingBox) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

/// Vertical centers within this fraction of the median token height share a row.
pub const ROW_TOLERANCE: f64 = 0.4;
/// A horizontal gap wider than this multiple of the median token height
/// splits a row into separate page lines.
pub const LINE_SPLIT_GAP: f64 = 2.0;
/// Lines whose left edges differ by at most this fraction of the median line
/// height count as starting at the same x.
pub const BLOCK_X_TOLERANCE: f64 = 0.5;
/// Maximum vertical gap between lines of one block, as a multiple of the
/// taller line's height.
pub const BLOCK_MAX_GAP: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LineInfo {
    pub id: usize,
    pub row: usize,
    pub block: usize,
    /// Token indices (into the input slice) in left-to-right order.
    pub tokens: Vec<usize>,
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockInfo {
    pub id: usize,
    /// Line ids in increasing order.
    pub lines: Vec<usize>,
    pub bbox: BoundingBox,
    pub first_row: usize,
    pub last_row: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Layout {
    pub lines: Vec<LineInfo>,
    pub blocks: Vec<BlockInfo>,
    /// Per input token: (line id, word id within line).
    pub positions: Vec<(usize, usize)>,
}

impl Layout {
    pub fn block_of_line(&self, line: usize) -> usize {
        self.lines[line].block
    }

    /// Tokens of a block in reading order (line by line).
    pub fn block_tokens(&self, block: usize) -> Vec<usize> {
        self.blocks[block].lines.iter().flat_map(|&l| self.lines[l].tokens.iter().copied()).collect()
    }
}

pub(crate) fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn analyze(boxes: &[BoundingBox]) -> Layout {
    if boxes.is_empty() {
        return Layout::default();
    }
    let token_h = median(boxes.iter().map(|b| b.height() as f64).collect());
    let row_tol2 = 2.0 * ROW_TOLERANCE * token_h;
    let split_gap = LINE_SPLIT_GAP * token_h;

    // rows: single-linkage on vertical centers
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by_key(|&i| (boxes[i].cy2(), boxes[i].x0, i));
    let mut rows: Vec<Vec<usize>> = vec![vec![order[0]]];
    for w in order.windows(2) {
        let gap = (boxes[w[1]].cy2() - boxes[w[0]].cy2()) as f64;
        if gap > row_tol2 {
            rows.push(Vec::new());
        }
        rows.last_mut().expect("row").push(w[1]);
    }

    // page lines: split each row at wide horizontal gaps
    let mut lines: Vec<LineInfo> = Vec::new();
    for (r, row) in rows.iter_mut().enumerate() {
        row.sort_by_key(|&i| (boxes[i].x0, boxes[i].x1, i));
        let mut current: Vec<usize> = Vec::new();
        let mut reach = 0u32;
        for &i in row.iter() {
            if !current.is_empty() && boxes[i].x0 as f64 - reach as f64 > split_gap {
                lines.push(new_line(lines.len(), r, std::mem::take(&mut current), boxes));
            }
            reach = if current.is_empty() { boxes[i].x1 } else { reach.max(boxes[i].x1) };
            current.push(i);
        }
        lines.push(new_line(lines.len(), r, current, boxes));
    }

    let mut positions = vec![(0, 0); boxes.len()];
    for l in &lines {
        for (w, &t) in l.tokens.iter().enumerate() {
            positions[t] = (l.id, w);
        }
    }

    // text blocks: connected components of lines with aligned left edges
    // and a small vertical gap
    let line_h = median(lines.iter().map(|l| l.bbox.height() as f64).collect());
    let x_tol = BLOCK_X_TOLERANCE * line_h;
    let linked = |a: &LineInfo, b: &LineInfo| -> bool {
        if a.row == b.row {
            return false;
        }
        let (up, down) = if a.row < b.row { (a, b) } else { (b, a) };
        let dx = (up.bbox.x0 as f64 - down.bbox.x0 as f64).abs();
        let gap = down.bbox.y0 as f64 - up.bbox.y1 as f64;
        let h = up.bbox.height().max(down.bbox.height()) as f64;
        dx <= x_tol && gap <= BLOCK_MAX_GAP * h
    };
    let mut block_of = vec![usize::MAX; lines.len()];
    let mut blocks: Vec<BlockInfo> = Vec::new();
    for start in 0..lines.len() {
        if block_of[start] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![start];
        block_of[start] = id;
        let mut stack = vec![start];
        while let Some(cur) = stack.pop() {
            for other in 0..lines.len() {
                if block_of[other] == usize::MAX && linked(&lines[cur], &lines[other]) {
                    block_of[other] = id;
                    members.push(other);
                    stack.push(other);
                }
            }
        }
        members.sort_unstable();
        let bbox = members.iter().skip(1).fold(lines[members[0]].bbox, |b, &l| b.union(&lines[l].bbox));
        let first_row = members.iter().map(|&l| lines[l].row).min().unwrap_or(0);
        let last_row = members.iter().map(|&l| lines[l].row).max().unwrap_or(0);
        blocks.push(BlockInfo { id, lines: members, bbox, first_row, last_row });
    }
    for l in &mut lines {
        l.block = block_of[l.id];
    }
    Layout { lines, blocks, positions }
}

fn new_line(id: usize, row: usize, tokens: Vec<usize>, boxes: &[BoundingBox]) -> LineInfo {
    let bbox = tokens.iter().skip(1).fold(boxes[tokens[0]], |b, &t| b.union(&boxes[t]));
    LineInfo { id, row, block: 0, tokens, bbox }
}
