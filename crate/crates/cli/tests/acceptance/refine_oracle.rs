//! Straight transcription of the refinement algorithm with its own box
//! algebra, labelling and suppression. Shares no code with the library.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
    fn valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }
}

#[derive(Debug, Clone)]
pub struct Pred {
    pub rect: Rect,
    pub category: u8,
    /// Confidence of class `j` at index `j - 1`.
    pub scores: Vec<f64>,
    pub score: f64,
}

impl Pred {
    fn s(&self, j: u8) -> f64 {
        self.scores.get(j as usize - 1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Tag {
    Split,
    Merge,
    Add,
    Leftover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Out {
    pub rect: Rect,
    pub category: u8,
    pub conf: f64,
    pub tag: Tag,
}

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let iw = a.x1.min(b.x1) - a.x0.max(b.x0);
    let ih = a.y1.min(b.y1) - a.y0.max(b.y0);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area() + b.area() - inter)
}

/// Touching sides (left, top, right, bottom); empty unless the boxes overlap.
fn sides(r: &Rect, p: &Rect, tol: f64) -> [bool; 4] {
    if iou(r, p) == 0.0 {
        return [false; 4];
    }
    let tw = tol * (r.x1 - r.x0);
    let th = tol * (r.y1 - r.y0);
    [
        (r.x0 - p.x0).abs() <= tw,
        (r.y0 - p.y0).abs() <= th,
        (r.x1 - p.x1).abs() <= tw,
        (r.y1 - p.y1).abs() <= th,
    ]
}

fn touches(r: &Rect, p: &Rect, tol: f64) -> bool {
    sides(r, p, tol).iter().filter(|&&s| s).count() >= 2
}

fn crop(r: &Rect, p: &Rect, tol: f64) -> Option<Rect> {
    if !touches(r, p, tol) {
        return None;
    }
    let s = sides(r, p, tol);
    let c = Rect {
        x0: if s[0] { r.x0 } else { p.x0 },
        y0: if s[1] { r.y0 } else { p.y0 },
        x1: if s[2] { r.x1 } else { p.x1 },
        y1: if s[3] { r.y1 } else { p.y1 },
    };
    c.valid().then_some(c)
}

/// 8-connected components by two-pass union-find labelling. Returned in
/// category order, then by raster position of the first pixel.
pub fn components(w: usize, h: usize, labels: &[u8]) -> Vec<(Rect, u8)> {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let object = |l: u8| l != 0 && l != 255;
    let mut parent: Vec<usize> = (0..w * h).collect();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !object(labels[i]) {
                continue;
            }
            let mut neighbours = Vec::new();
            if x > 0 {
                neighbours.push(i - 1);
            }
            if y > 0 {
                neighbours.push(i - w);
                if x > 0 {
                    neighbours.push(i - w - 1);
                }
                if x + 1 < w {
                    neighbours.push(i - w + 1);
                }
            }
            for n in neighbours {
                if labels[n] == labels[i] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, n));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
            }
        }
    }
    // root -> (first pixel, bounds)
    let mut found: Vec<(usize, u8, [usize; 4])> = Vec::new();
    let mut slot = vec![usize::MAX; w * h];
    for (i, &label) in labels.iter().enumerate() {
        if !object(label) {
            continue;
        }
        let root = find(&mut parent, i);
        let (x, y) = (i % w, i / w);
        if slot[root] == usize::MAX {
            slot[root] = found.len();
            found.push((i, label, [x, y, x, y]));
        }
        let b = &mut found[slot[root]].2;
        b[0] = b[0].min(x);
        b[1] = b[1].min(y);
        b[2] = b[2].max(x);
        b[3] = b[3].max(y);
    }
    found.sort_by_key(|&(first, cat, _)| (cat, first));
    found
        .into_iter()
        .map(|(_, cat, b)| {
            (Rect { x0: b[0] as f64, y0: b[1] as f64, x1: (b[2] + 1) as f64, y1: (b[3] + 1) as f64 }, cat)
        })
        .collect()
}

fn cmp_f(a: f64, b: f64) -> std::cmp::Ordering {
    a.partial_cmp(&b).expect("finite")
}

fn rect_key(r: &Rect) -> [f64; 4] {
    [r.x0, r.y0, r.x1, r.y1]
}

fn cmp_rect(a: &Rect, b: &Rect) -> std::cmp::Ordering {
    let (ka, kb) = (rect_key(a), rect_key(b));
    for i in 0..4 {
        let o = cmp_f(ka[i], kb[i]);
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// Canonical prediction order: coordinates, category, score, score vector.
fn sort_predictions(preds: &[Pred]) -> Vec<Pred> {
    let mut v = preds.to_vec();
    v.sort_by(|a, b| {
        cmp_rect(&a.rect, &b.rect)
            .then(a.category.cmp(&b.category))
            .then(cmp_f(a.score, b.score))
            .then_with(|| {
                for (x, y) in a.scores.iter().zip(&b.scores) {
                    let o = cmp_f(*x, *y);
                    if o.is_ne() {
                        return o;
                    }
                }
                a.scores.len().cmp(&b.scores.len())
            })
    });
    v
}

fn nms(boxes: &[Out], threshold: f64) -> Vec<Out> {
    let mut order = boxes.to_vec();
    order.sort_by(|a, b| {
        cmp_f(b.conf, a.conf)
            .then(cmp_f(a.rect.x0, b.rect.x0))
            .then(cmp_f(a.rect.y0, b.rect.y0))
            .then(a.category.cmp(&b.category))
            .then(cmp_rect(&a.rect, &b.rect))
            .then(a.tag.cmp(&b.tag))
            .then(cmp_f(a.conf, b.conf))
    });
    let mut kept: Vec<Out> = Vec::new();
    for c in order {
        if kept.iter().all(|k| k.category != c.category || iou(&k.rect, &c.rect) <= threshold) {
            kept.push(c);
        }
    }
    kept
}

pub fn refine(refs: &[(Rect, u8)], predictions: &[Pred]) -> Vec<Out> {
    const SPLIT_CONF: f64 = 0.4;
    const SPLIT_IOU: f64 = 0.6;
    const SPLIT_BONUS: f64 = 0.1;
    const MERGE_CONF: f64 = 0.1;
    const MERGE_BONUS: f64 = 0.4;
    const CAP: f64 = 0.9;
    const ADD_CONF: f64 = 0.5;
    const ADD_IOU: f64 = 0.8;
    const NMS_IOU: f64 = 0.4;
    const TOL: f64 = 0.1;

    let preds = sort_predictions(predictions);
    let mut leftover = vec![true; refs.len()];
    let mut shortlist: Vec<Out> = Vec::new();

    // Splitting.
    for (r, (l, j)) in refs.iter().enumerate() {
        for p in &preds {
            if p.s(*j) <= SPLIT_CONF {
                continue;
            }
            let cand = if iou(l, &p.rect) <= SPLIT_IOU {
                match crop(l, &p.rect, TOL) {
                    Some(c) => c,
                    None => continue,
                }
            } else {
                *l
            };
            shortlist.push(Out { rect: cand, category: *j, conf: CAP.min(p.s(*j) + SPLIT_BONUS), tag: Tag::Split });
            leftover[r] = false;
        }
    }

    // Merging over every subset of the remaining fragments of each class.
    let mut classes: Vec<u8> = refs.iter().zip(&leftover).filter(|(_, &l)| l).map(|((_, c), _)| *c).collect();
    classes.sort();
    classes.dedup();
    for j in classes {
        let members: Vec<usize> = (0..refs.len()).filter(|&r| leftover[r] && refs[r].1 == j).collect();
        let n = members.len();
        if n < 2 {
            continue;
        }
        assert!(n <= 16, "oracle covers the exhaustive regime only");
        // (merged box, chosen subset)
        let mut groups: Vec<(Rect, u32)> = Vec::new();
        for subset in 0u32..(1 << n) {
            if subset.count_ones() < 2 {
                continue;
            }
            let picked: Vec<&Rect> = (0..n).filter(|b| subset >> b & 1 == 1).map(|b| &refs[members[b]].0).collect();
            let merged = Rect {
                x0: picked.iter().map(|r| r.x0).fold(f64::INFINITY, f64::min),
                y0: picked.iter().map(|r| r.y0).fold(f64::INFINITY, f64::min),
                x1: picked.iter().map(|r| r.x1).fold(f64::NEG_INFINITY, f64::max),
                y1: picked.iter().map(|r| r.y1).fold(f64::NEG_INFINITY, f64::max),
            };
            match groups.iter_mut().find(|(m, _)| *m == merged) {
                Some(g) => {
                    if subset.count_ones() > g.1.count_ones() {
                        g.1 = subset;
                    }
                }
                None => groups.push((merged, subset)),
            }
        }
        // (box, subset, best overlap, class score of the best prediction)
        let mut candidates: Vec<(Rect, u32, f64, f64)> = Vec::new();
        for (merged, subset) in groups {
            let mut best: Option<(f64, f64)> = None;
            for p in &preds {
                let o = iou(&merged, &p.rect);
                if o > 0.0 && best.is_none_or(|(b, _)| o > b) {
                    best = Some((o, p.s(j)));
                }
            }
            if let Some((o, s)) = best {
                candidates.push((merged, subset, o, s));
            }
        }
        let mut used = 0u32;
        loop {
            let mut pick: Option<usize> = None;
            for (i, c) in candidates.iter().enumerate() {
                if c.3 <= MERGE_CONF || c.1 & used != 0 {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some(k) => {
                        let b = &candidates[k];
                        c.2 > b.2
                            || (c.2 == b.2 && c.1.count_ones() > b.1.count_ones())
                            || (c.2 == b.2 && c.1.count_ones() == b.1.count_ones() && c.1 < b.1)
                    }
                };
                if better {
                    pick = Some(i);
                }
            }
            let Some(k) = pick else { break };
            let (rect, subset, _, s) = candidates[k];
            used |= subset;
            shortlist.push(Out { rect, category: j, conf: CAP.min(s + MERGE_BONUS), tag: Tag::Merge });
        }
        for b in 0..n {
            if used >> b & 1 == 1 {
                leftover[members[b]] = false;
            }
        }
    }

    // Adding, over all references.
    for (l, j) in refs {
        for p in &preds {
            let s = p.s(*j);
            if s <= ADD_CONF {
                continue;
            }
            if iou(l, &p.rect) >= ADD_IOU {
                shortlist.push(Out { rect: *l, category: *j, conf: s, tag: Tag::Add });
            } else if let Some(c) = crop(l, &p.rect, TOL) {
                shortlist.push(Out { rect: c, category: *j, conf: s, tag: Tag::Add });
            }
        }
    }

    let mut out = nms(&shortlist, NMS_IOU);
    for (r, (l, j)) in refs.iter().enumerate() {
        if leftover[r] {
            out.push(Out { rect: *l, category: *j, conf: 1.0, tag: Tag::Leftover });
        }
    }
    out
}
