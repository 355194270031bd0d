//! Brute-force oracle for relation derivation: grouping by pairwise
//! connectivity, relations by direct enumeration of all token/line/block
//! pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use docsynth::factstore::{BoundingBox, DatatypeDetector, DocumentFacts};
use docsynth::logic::Constant;
use proptest::prelude::*;

pub type Atoms = BTreeSet<(String, Vec<Constant>)>;

struct Find(Vec<usize>);

impl Find {
    fn new(n: usize) -> Self {
        Find((0..n).collect())
    }
    fn root(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let r = self.root(self.0[x]);
            self.0[x] = r;
        }
        self.0[x]
    }
    fn join(&mut self, a: usize, b: usize) {
        let (a, b) = (self.root(a), self.root(b));
        self.0[a] = b;
    }
    fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..self.0.len() {
            let r = self.root(x);
            m.entry(r).or_default().push(x);
        }
        m.into_values().collect()
    }
}

fn med(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn center_y(b: &BoundingBox) -> f64 {
    (b.y0 + b.y1) as f64 / 2.0
}

fn center_x(b: &BoundingBox) -> f64 {
    (b.x0 + b.x1) as f64 / 2.0
}

fn hull(bs: impl Iterator<Item = BoundingBox>) -> BoundingBox {
    bs.reduce(|a, b| BoundingBox::new(a.x0.min(b.x0), a.y0.min(b.y0), a.x1.max(b.x1), a.y1.max(b.y1))).unwrap()
}

pub fn oracle(toks: &[(String, BoundingBox)], det: &DatatypeDetector) -> Atoms {
    let n = toks.len();
    let mut out = Atoms::new();
    if n == 0 {
        return out;
    }
    let b = |t: usize| toks[t].1;
    let h = med(toks.iter().map(|t| t.1.height() as f64).collect());

    // rows
    let mut f = Find::new(n);
    for a in 0..n {
        for c in 0..n {
            if (center_y(&b(a)) - center_y(&b(c))).abs() <= 0.4 * h {
                f.join(a, c);
            }
        }
    }
    let mut rows = f.groups();
    rows.sort_by(|r1, r2| {
        let m = |r: &Vec<usize>| r.iter().map(|&t| b(t).cy2()).min().unwrap();
        m(r1).cmp(&m(r2))
    });

    // lines within rows: horizontal gap at most 2h
    let mut lines: Vec<(usize, Vec<usize>)> = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        let mut f = Find::new(row.len());
        for a in 0..row.len() {
            for c in 0..row.len() {
                let (p, q) = (b(row[a]), b(row[c]));
                let (lo, hi) = if p.x0 <= q.x0 { (p, q) } else { (q, p) };
                if hi.x0 as f64 - lo.x1 as f64 <= 2.0 * h {
                    f.join(a, c);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> =
            f.groups().into_iter().map(|g| g.into_iter().map(|k| row[k]).collect()).collect();
        for g in &mut groups {
            g.sort_by_key(|&t| (b(t).x0, b(t).x1, t));
        }
        groups.sort_by_key(|g| b(g[0]).x0);
        for g in groups {
            lines.push((r, g));
        }
    }
    let lbox: Vec<BoundingBox> = lines.iter().map(|(_, g)| hull(g.iter().map(|&t| b(t)))).collect();
    let nl = lines.len();

    // blocks
    let lh = med(lbox.iter().map(|x| x.height() as f64).collect());
    let mut f = Find::new(nl);
    for a in 0..nl {
        for c in 0..nl {
            if lines[a].0 < lines[c].0 {
                let (u, d) = (lbox[a], lbox[c]);
                let dx = (u.x0 as f64 - d.x0 as f64).abs();
                let gap = d.y0 as f64 - u.y1 as f64;
                if dx <= 0.5 * lh && gap <= 2.0 * u.height().max(d.height()) as f64 {
                    f.join(a, c);
                }
            }
        }
    }
    let mut blocks = f.groups();
    for bl in &mut blocks {
        bl.sort_unstable();
    }
    blocks.sort_by_key(|bl| bl[0]);
    let mut block_of = vec![0; nl];
    for (k, bl) in blocks.iter().enumerate() {
        for &l in bl {
            block_of[l] = k;
        }
    }

    let d = Constant::sym("d1");
    let c = |x: usize| Constant::from(x);
    let txt = |t: usize| Constant::sym(&toks[t].0);
    let dt = |t: usize| Constant::sym(det.datatype_of(&toks[t].0).tag());
    let mut add = |name: &str, args: Vec<Constant>| {
        assert!(out.insert((name.to_string(), args)), "duplicate atom in oracle");
    };

    let mut reading = 0;
    for (l, (_, g)) in lines.iter().enumerate() {
        add("text_blocks_master", vec![d.clone(), c(block_of[l]), c(l)]);
        let text: Vec<&str> = g.iter().map(|&t| toks[t].0.as_str()).collect();
        add("page_lines_master", vec![d.clone(), c(l), Constant::from(text.join(" "))]);
        for (w, &t) in g.iter().enumerate() {
            add("word_in_line", vec![d.clone(), c(block_of[l]), dt(t), c(reading), c(l), txt(t), c(w)]);
            reading += 1;
            if w + 1 < g.len() {
                let r = g[w + 1];
                add("word_right_left", vec![d.clone(), c(l), txt(t), dt(t), c(w), txt(r), dt(r), c(w + 1)]);
            }
        }
    }

    // rank of `x` among candidates by key
    fn rank<K: Ord>(cands: &[usize], key: impl Fn(usize) -> K, x: usize) -> usize {
        cands.iter().filter(|&&y| key(y) < key(x)).count()
    }

    let row = |l: usize| lines[l].0;
    for a in 0..nl {
        let dxl = |m: usize| ((center_x(&lbox[a]) - center_x(&lbox[m])).abs() * 2.0) as u64;
        let above: Vec<usize> = (0..nl).filter(|&m| row(m) < row(a)).collect();
        let below: Vec<usize> = (0..nl).filter(|&m| row(m) > row(a)).collect();
        let left: Vec<usize> = (0..nl).filter(|&m| row(m) == row(a) && lbox[m].x1 <= lbox[a].x0).collect();
        let right: Vec<usize> = (0..nl).filter(|&m| row(m) == row(a) && lbox[m].x0 >= lbox[a].x1).collect();
        for &m in &above {
            let k = rank(&above, |y| (row(a) - row(y), dxl(y), y), m);
            add("above_line", vec![d.clone(), c(a), c(m), c(k)]);
        }
        for &m in &below {
            let k = rank(&below, |y| (row(y) - row(a), dxl(y), y), m);
            add("below_line", vec![d.clone(), c(a), c(m), c(k)]);
        }
        for &m in &left {
            let k = rank(&left, |y| (lbox[a].x0 - lbox[y].x1, y), m);
            add("left_line", vec![d.clone(), c(a), c(m), c(k)]);
        }
        for &m in &right {
            let k = rank(&right, |y| (lbox[y].x0 - lbox[a].x1, y), m);
            add("right_line", vec![d.clone(), c(a), c(m), c(k)]);
        }
    }

    let nb = blocks.len();
    let bbox: Vec<BoundingBox> = blocks.iter().map(|bl| hull(bl.iter().map(|&l| lbox[l]))).collect();
    let first = |k: usize| blocks[k].iter().map(|&l| row(l)).min().unwrap();
    let last = |k: usize| blocks[k].iter().map(|&l| row(l)).max().unwrap();
    for a in 0..nb {
        let dxb = |m: usize| ((center_x(&bbox[a]) - center_x(&bbox[m])).abs() * 2.0) as u64;
        let overlap = |m: usize| first(m) <= last(a) && first(a) <= last(m);
        let above: Vec<usize> = (0..nb).filter(|&m| last(m) < first(a)).collect();
        let below: Vec<usize> = (0..nb).filter(|&m| first(m) > last(a)).collect();
        let left: Vec<usize> = (0..nb).filter(|&m| overlap(m) && bbox[m].x1 <= bbox[a].x0).collect();
        let right: Vec<usize> = (0..nb).filter(|&m| overlap(m) && bbox[m].x0 >= bbox[a].x1).collect();
        for &m in &above {
            let k = rank(&above, |y| (first(a) - last(y), dxb(y), y), m);
            add("above_block", vec![d.clone(), c(a), c(m), c(k)]);
        }
        for &m in &below {
            let k = rank(&below, |y| (first(y) - last(a), dxb(y), y), m);
            add("below_block", vec![d.clone(), c(a), c(m), c(k)]);
        }
        for &m in &left {
            let k = rank(&left, |y| (bbox[a].x0 - bbox[y].x1, y), m);
            add("left_block", vec![d.clone(), c(a), c(m), c(k)]);
        }
        for &m in &right {
            let k = rank(&right, |y| (bbox[y].x0 - bbox[a].x1, y), m);
            add("right_block", vec![d.clone(), c(a), c(m), c(k)]);
        }
        // lines below a word, same block
        for &l in &blocks[a] {
            let under: Vec<usize> = blocks[a].iter().copied().filter(|&m| row(m) > row(l)).collect();
            for (w, &t) in lines[l].1.iter().enumerate() {
                for (k, &m) in under.iter().enumerate() {
                    add("lines_below_block_word", vec![d.clone(), c(a), c(l), c(w), txt(t), c(m), c(k)]);
                }
            }
        }
    }

    let mut subs = |seq: &[usize], id: usize, by_word: &str, by_type: &str| {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for x in 0..seq.len() {
            for y in x + 2..seq.len() {
                if y - x - 1 <= 6 {
                    pairs.push((x, y));
                }
            }
        }
        for &(x, y) in &pairs {
            let inner: Vec<&str> = seq[x + 1..y].iter().map(|&t| toks[t].0.as_str()).collect();
            let inner = Constant::from(inner.join(" "));
            let kw = pairs
                .iter()
                .filter(|&&(p, q)| {
                    (p, q) < (x, y) && toks[seq[p]].0 == toks[seq[x]].0 && toks[seq[q]].0 == toks[seq[y]].0
                })
                .count();
            let kt = pairs
                .iter()
                .filter(|&&(p, q)| (p, q) < (x, y) && dt(seq[p]) == dt(seq[x]) && dt(seq[q]) == dt(seq[y]))
                .count();
            add(by_word, vec![d.clone(), c(id), txt(seq[x]), txt(seq[y]), c(kw), inner.clone()]);
            add(by_type, vec![d.clone(), c(id), dt(seq[x]), dt(seq[y]), c(kt), inner]);
        }
    };
    for (l, (_, g)) in lines.iter().enumerate() {
        subs(g, l, "line_to_substring", "line_to_substring_dtype");
    }
    for (k, bl) in blocks.iter().enumerate() {
        let seq: Vec<usize> = bl.iter().flat_map(|&l| lines[l].1.iter().copied()).collect();
        subs(&seq, k, "block_to_substring", "block_to_substring_dtype");
    }
    out
}

pub fn derived(d: &DocumentFacts) -> Atoms {
    let mut out = Atoms::new();
    for (name, t) in d.relations().atoms() {
        assert!(out.insert((name.to_string(), t.to_vec())), "duplicate atom {name}{t:?}");
    }
    out
}

const VOCAB: [&str; 10] =
    ["Please", "Nr.", "Datum", "12.03.2018", "186FD1", "125.50", "Berlin", "Total", "10115", "Nr."];

pub fn layout_strategy() -> impl Strategy<Value = Vec<(String, BoundingBox)>> {
    prop::collection::vec((0usize..10, 0u32..12, 0u32..8, 0u32..6, 20u32..90, 16u32..24), 0..=20).prop_map(|v| {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for (w, col, row, jit, width, height) in v {
            let x0 = col * 80 + jit;
            let y0 = row * 30 + jit;
            let b = BoundingBox::new(x0, y0, x0 + width, y0 + height);
            if seen.insert(b, ()).is_none() {
                out.push((VOCAB[w].to_string(), b));
            }
        }
        out
    })
}
