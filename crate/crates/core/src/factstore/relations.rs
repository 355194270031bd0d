//! The primitive relations derived from word tokens.
//!
//! | relation | arguments |
//! |---|---|
//! | `text_blocks_master` | Doc, Block, Line |
//! | `page_lines_master` | Doc, Line, LineText |
//! | `lines_below_block_word` | Doc, Block, Line, WordId, Word, BelowLine, K |
//! | `word_in_line` | Doc, Block, Dtype, TokenIndex, Line, Word, WordId |
//! | `above_block` / `below_block` | Doc, Block, OtherBlock, K |
//! | `left_block` / `right_block` | Doc, Block, OtherBlock, K |
//! | `above_line` / `below_line` | Doc, Line, OtherLine, K |
//! | `left_line` / `right_line` | Doc, Line, OtherLine, K |
//! | `word_right_left` | Doc, Line, LWord, LType, LWordId, RWord, RType, RWordId |
//! | `line_to_substring` / `block_to_substring` | Doc, Line or Block, LWord, RWord, K, Text |
//! | `line_to_substring_dtype` / `block_to_substring_dtype` | Doc, Line or Block, LType, RType, K, Text |
//!
//! `K` is a 0-based proximity index (0 = nearest) or, for substrings, the
//! occurrence index of the boundary pair within its line or block.

use std::collections::HashMap;
use std::ops::ControlFlow;

use rustc_hash::FxHashMap;

use crate::logic::{Constant, ExtensionalDb};

use super::layout::Layout;
use super::WordToken;

pub const TEXT_BLOCKS_MASTER: &str = "text_blocks_master";
pub const PAGE_LINES_MASTER: &str = "page_lines_master";
pub const LINES_BELOW_BLOCK_WORD: &str = "lines_below_block_word";
pub const WORD_IN_LINE: &str = "word_in_line";
pub const ABOVE_BLOCK: &str = "above_block";
pub const BELOW_BLOCK: &str = "below_block";
pub const ABOVE_LINE: &str = "above_line";
pub const BELOW_LINE: &str = "below_line";
pub const WORD_RIGHT_LEFT: &str = "word_right_left";
pub const RIGHT_BLOCK: &str = "right_block";
pub const LEFT_BLOCK: &str = "left_block";
pub const RIGHT_LINE: &str = "right_line";
pub const LEFT_LINE: &str = "left_line";
pub const BLOCK_TO_SUBSTRING: &str = "block_to_substring";
pub const BLOCK_TO_SUBSTRING_DTYPE: &str = "block_to_substring_dtype";
pub const LINE_TO_SUBSTRING: &str = "line_to_substring";
pub const LINE_TO_SUBSTRING_DTYPE: &str = "line_to_substring_dtype";

/// Name and arity of every primitive relation.
pub const RELATIONS: [(&str, usize); 17] = [
    (TEXT_BLOCKS_MASTER, 3),
    (PAGE_LINES_MASTER, 3),
    (LINES_BELOW_BLOCK_WORD, 7),
    (WORD_IN_LINE, 7),
    (ABOVE_BLOCK, 4),
    (BELOW_BLOCK, 4),
    (ABOVE_LINE, 4),
    (BELOW_LINE, 4),
    (WORD_RIGHT_LEFT, 8),
    (RIGHT_BLOCK, 4),
    (LEFT_BLOCK, 4),
    (RIGHT_LINE, 4),
    (LEFT_LINE, 4),
    (BLOCK_TO_SUBSTRING, 6),
    (BLOCK_TO_SUBSTRING_DTYPE, 6),
    (LINE_TO_SUBSTRING, 6),
    (LINE_TO_SUBSTRING_DTYPE, 6),
];

/// Longest substring (in tokens) recorded between a boundary pair.
pub const MAX_SUBSTRING_TOKENS: usize = 6;

#[derive(Clone, Debug)]
pub struct Relation {
    name: &'static str,
    arity: usize,
    tuples: Vec<Vec<Constant>>,
    index: Vec<FxHashMap<Constant, Vec<u32>>>,
}

impl Relation {
    fn new(name: &'static str, arity: usize) -> Self {
        Relation { name, arity, tuples: Vec::new(), index: vec![FxHashMap::default(); arity] }
    }

    fn insert(&mut self, tuple: Vec<Constant>) {
        debug_assert_eq!(tuple.len(), self.arity, "{}", self.name);
        let id = self.tuples.len() as u32;
        for (pos, c) in tuple.iter().enumerate() {
            self.index[pos].entry(c.clone()).or_default().push(id);
        }
        self.tuples.push(tuple);
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn tuples(&self) -> &[Vec<Constant>] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    fn matches(tuple: &[Constant], pattern: &[Option<Constant>]) -> bool {
        tuple.iter().zip(pattern).all(|(c, p)| p.as_ref().is_none_or(|p| p == c))
    }

    pub fn scan(
        &self,
        pattern: &[Option<Constant>],
        visit: &mut dyn FnMut(&[Constant]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        // most selective bound position
        let mut best: Option<&Vec<u32>> = None;
        for (pos, p) in pattern.iter().enumerate() {
            if let Some(c) = p {
                match self.index[pos].get(c) {
                    None => return ControlFlow::Continue(()),
                    Some(ids) => {
                        if best.is_none_or(|b| ids.len() < b.len()) {
                            best = Some(ids);
                        }
                    }
                }
            }
        }
        match best {
            Some(ids) => {
                for &id in ids {
                    let t = &self.tuples[id as usize];
                    if Self::matches(t, pattern) {
                        visit(t)?;
                    }
                }
            }
            None => {
                for t in &self.tuples {
                    visit(t)?;
                }
            }
        }
        ControlFlow::Continue(())
    }
}

/// All primitive relations of one document.
#[derive(Clone, Debug)]
pub struct RelationStore {
    relations: Vec<Relation>,
}

impl Default for RelationStore {
    fn default() -> Self {
        RelationStore { relations: RELATIONS.iter().map(|&(n, a)| Relation::new(n, a)).collect() }
    }
}

impl RelationStore {
    pub fn get(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }

    fn get_mut(&mut self, name: &str) -> &mut Relation {
        self.relations.iter_mut().find(|r| r.name == name).expect("declared relation")
    }

    pub fn iter(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    pub fn total_atoms(&self) -> usize {
        self.relations.iter().map(Relation::len).sum()
    }

    /// Every atom as `(relation, tuple)`, relations in declaration order.
    pub fn atoms(&self) -> impl Iterator<Item = (&'static str, &[Constant])> {
        self.relations.iter().flat_map(|r| r.tuples.iter().map(move |t| (r.name, t.as_slice())))
    }
}

impl ExtensionalDb for RelationStore {
    fn relation_arity(&self, name: &str) -> Option<usize> {
        self.get(name).map(Relation::arity)
    }

    fn scan(
        &self,
        name: &str,
        pattern: &[Option<Constant>],
        visit: &mut dyn FnMut(&[Constant]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        match self.get(name) {
            Some(r) if r.arity == pattern.len() => r.scan(pattern, visit),
            _ => ControlFlow::Continue(()),
        }
    }
}

fn int(i: usize) -> Constant {
    Constant::Int(i as i64)
}

/// Derives every relation from tokens whose line/word/block ids were
/// assigned by `layout`.
pub fn derive(doc_id: &str, tokens: &[WordToken], layout: &Layout) -> RelationStore {
    let mut store = RelationStore::default();
    let doc = Constant::sym(doc_id);
    let text = |t: usize| Constant::sym(&tokens[t].text);
    let dtype = |t: usize| Constant::sym(tokens[t].dtype.tag());
    let line_text =
        |l: usize| layout.lines[l].tokens.iter().map(|&t| tokens[t].text.as_str()).collect::<Vec<_>>().join(" ");

    // global reading order index
    let mut reading = 0usize;
    for line in &layout.lines {
        store.get_mut(TEXT_BLOCKS_MASTER).insert(vec![doc.clone(), int(line.block), int(line.id)]);
        store.get_mut(PAGE_LINES_MASTER).insert(vec![doc.clone(), int(line.id), Constant::from(line_text(line.id))]);
        for (w, &t) in line.tokens.iter().enumerate() {
            store.get_mut(WORD_IN_LINE).insert(vec![
                doc.clone(),
                int(line.block),
                dtype(t),
                int(reading),
                int(line.id),
                text(t),
                int(w),
            ]);
            reading += 1;
        }
        for (w, pair) in line.tokens.windows(2).enumerate() {
            store.get_mut(WORD_RIGHT_LEFT).insert(vec![
                doc.clone(),
                int(line.id),
                text(pair[0]),
                dtype(pair[0]),
                int(w),
                text(pair[1]),
                dtype(pair[1]),
                int(w + 1),
            ]);
        }
    }

    // lines below a word inside its block
    for block in &layout.blocks {
        for (bi, &l) in block.lines.iter().enumerate() {
            let below: Vec<usize> =
                block.lines[bi + 1..].iter().copied().filter(|&m| layout.lines[m].row > layout.lines[l].row).collect();
            for (w, &t) in layout.lines[l].tokens.iter().enumerate() {
                for (k, &m) in below.iter().enumerate() {
                    store.get_mut(LINES_BELOW_BLOCK_WORD).insert(vec![
                        doc.clone(),
                        int(block.id),
                        int(l),
                        int(w),
                        text(t),
                        int(m),
                        int(k),
                    ]);
                }
            }
        }
    }

    // vertical and horizontal neighbours of lines
    let lines = &layout.lines;
    for a in lines {
        let dx = |b: &super::layout::LineInfo| a.bbox.cx2().abs_diff(b.bbox.cx2());
        let mut above: Vec<&super::layout::LineInfo> = lines.iter().filter(|b| b.row < a.row).collect();
        above.sort_by_key(|b| (a.row - b.row, dx(b), b.id));
        let mut below: Vec<&super::layout::LineInfo> = lines.iter().filter(|b| b.row > a.row).collect();
        below.sort_by_key(|b| (b.row - a.row, dx(b), b.id));
        let mut left: Vec<&super::layout::LineInfo> =
            lines.iter().filter(|b| b.row == a.row && b.bbox.x1 <= a.bbox.x0).collect();
        left.sort_by_key(|b| (a.bbox.x0 - b.bbox.x1, b.id));
        let mut right: Vec<&super::layout::LineInfo> =
            lines.iter().filter(|b| b.row == a.row && b.bbox.x0 >= a.bbox.x1).collect();
        right.sort_by_key(|b| (b.bbox.x0 - a.bbox.x1, b.id));
        for (name, list) in [(ABOVE_LINE, above), (BELOW_LINE, below), (LEFT_LINE, left), (RIGHT_LINE, right)] {
            for (k, b) in list.into_iter().enumerate() {
                store.get_mut(name).insert(vec![doc.clone(), int(a.id), int(b.id), int(k)]);
            }
        }
    }

    let blocks = &layout.blocks;
    for a in blocks {
        let dx = |b: &super::layout::BlockInfo| a.bbox.cx2().abs_diff(b.bbox.cx2());
        let overlap = |b: &super::layout::BlockInfo| b.first_row <= a.last_row && a.first_row <= b.last_row;
        let mut above: Vec<&super::layout::BlockInfo> = blocks.iter().filter(|b| b.last_row < a.first_row).collect();
        above.sort_by_key(|b| (a.first_row - b.last_row, dx(b), b.id));
        let mut below: Vec<&super::layout::BlockInfo> = blocks.iter().filter(|b| b.first_row > a.last_row).collect();
        below.sort_by_key(|b| (b.first_row - a.last_row, dx(b), b.id));
        let mut left: Vec<&super::layout::BlockInfo> =
            blocks.iter().filter(|b| overlap(b) && b.bbox.x1 <= a.bbox.x0).collect();
        left.sort_by_key(|b| (a.bbox.x0 - b.bbox.x1, b.id));
        let mut right: Vec<&super::layout::BlockInfo> =
            blocks.iter().filter(|b| overlap(b) && b.bbox.x0 >= a.bbox.x1).collect();
        right.sort_by_key(|b| (b.bbox.x0 - a.bbox.x1, b.id));
        for (name, list) in [(ABOVE_BLOCK, above), (BELOW_BLOCK, below), (LEFT_BLOCK, left), (RIGHT_BLOCK, right)] {
            for (k, b) in list.into_iter().enumerate() {
                store.get_mut(name).insert(vec![doc.clone(), int(a.id), int(b.id), int(k)]);
            }
        }
    }

    for line in &layout.lines {
        substrings(&mut store, &doc, line.id, &line.tokens, tokens, LINE_TO_SUBSTRING, LINE_TO_SUBSTRING_DTYPE);
    }
    for block in &layout.blocks {
        let seq = layout.block_tokens(block.id);
        substrings(&mut store, &doc, block.id, &seq, tokens, BLOCK_TO_SUBSTRING, BLOCK_TO_SUBSTRING_DTYPE);
    }
    store
}

fn substrings(
    store: &mut RelationStore,
    doc: &Constant,
    container: usize,
    seq: &[usize],
    tokens: &[WordToken],
    by_word: &'static str,
    by_dtype: &'static str,
) {
    let mut word_counts: HashMap<(&str, &str), usize> = HashMap::new();
    let mut type_counts: HashMap<(&str, &str), usize> = HashMap::new();
    for i in 0..seq.len() {
        for j in i + 2..seq.len().min(i + 2 + MAX_SUBSTRING_TOKENS) {
            let inner = seq[i + 1..j].iter().map(|&t| tokens[t].text.as_str()).collect::<Vec<_>>().join(" ");
            let (l, r) = (&tokens[seq[i]], &tokens[seq[j]]);
            let k = word_counts.entry((l.text.as_str(), r.text.as_str())).or_insert(0);
            store.get_mut(by_word).insert(vec![
                doc.clone(),
                int(container),
                Constant::sym(&l.text),
                Constant::sym(&r.text),
                int(*k),
                Constant::from(inner.clone()),
            ]);
            *k += 1;
            let k = type_counts.entry((l.dtype.tag(), r.dtype.tag())).or_insert(0);
            store.get_mut(by_dtype).insert(vec![
                doc.clone(),
                int(container),
                Constant::sym(l.dtype.tag()),
                Constant::sym(r.dtype.tag()),
                int(*k),
                Constant::from(inner),
            ]);
            *k += 1;
        }
    }
}
