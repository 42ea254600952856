//! Regression trees grown by exact greedy split search on presorted columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf { weight: f64, cover: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize, default_left: bool, gain: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Leaf { cover, .. } | Node::Split { cover, .. } => *cover,
        }
    }
}

/// Binary tree stored as a node array with the root at index 0. A row goes
/// left when `x[feature] < threshold`, or when it is missing and
/// `default_left` is set. `cover` counts training rows through each node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(weight: f64, cover: f64) -> Self {
        Self { nodes: vec![Node::Leaf { weight, cover }] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weight, .. } => return *weight,
                Node::Split { feature, threshold, left, right, default_left, .. } => {
                    let v = x[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
            }
        }
        rec(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { weight, .. } = n {
                *weight *= factor;
            }
        }
    }

    /// Largest feature index used by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Training rows presorted by every feature (missing values kept apart).
/// Positions refer to the slice of rows the columns were built from.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    rows: Vec<usize>,
    sorted: Vec<Vec<u32>>,
    missing: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(features: &FeatureMatrix, rows: &[usize]) -> Self {
        let (sorted, missing) = (0..features.n_features())
            .into_par_iter()
            .map(|f| {
                let mut present = Vec::with_capacity(rows.len());
                let mut absent = Vec::new();
                for (i, &r) in rows.iter().enumerate() {
                    if features.get(r, f).is_nan() {
                        absent.push(i as u32);
                    } else {
                        present.push(i as u32);
                    }
                }
                present.sort_by(|&a, &b| {
                    features.get(rows[a as usize], f).total_cmp(&features.get(rows[b as usize], f)).then(a.cmp(&b))
                });
                (present, absent)
            })
            .unzip();
        Self { rows: rows.to_vec(), sorted, missing }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

#[derive(Debug, Clone, Copy)]
struct Stats {
    g: f64,
    h: f64,
    count: usize,
}

pub(crate) fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let w = -g / (h + lambda);
    if w.is_finite() {
        w
    } else {
        0.0
    }
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        g * g / d
    } else {
        0.0
    }
}

/// Fit one tree to gradients `g` and hessians `h` given in the order of
/// `rows`. Hessians are used as supplied; the caller applies any floor.
pub fn fit_tree(
    features: &FeatureMatrix,
    rows: &[usize],
    g: &[f64],
    h: &[f64],
    config: &TrainConfig,
) -> Result<RegressionTree> {
    let cols = SortedColumns::new(features, rows);
    fit_tree_presorted(features, &cols, g, h, config)
}

/// Level-wise exact greedy growth. Each level scans every presorted column
/// once for all open nodes; since split choices of different nodes are
/// independent, the tree equals the depth-first greedy tree.
pub fn fit_tree_presorted(
    features: &FeatureMatrix,
    cols: &SortedColumns,
    g: &[f64],
    h: &[f64],
    config: &TrainConfig,
) -> Result<RegressionTree> {
    let n = cols.rows.len();
    if n == 0 {
        return Err(Error::Data("cannot fit a tree on zero rows".into()));
    }
    if g.len() != n || h.len() != n {
        return Err(Error::Data(format!("gradient/hessian length mismatch: {} rows, {} g, {} h", n, g.len(), h.len())));
    }
    const DONE: u32 = u32::MAX;
    let mut pos = vec![0u32; n];
    // (depth, stats, split) per node in creation order
    let mut depth = vec![0usize];
    let mut splits: Vec<Option<(Candidate, usize, usize)>> = vec![None];
    let mut stats: Vec<Stats> = vec![node_stats(&pos, 0, g, h)];
    let mut open = vec![0usize];

    while !open.is_empty() {
        let open_now: Vec<usize> = open.iter().copied().filter(|&nd| depth[nd] < config.max_depth).collect();
        if open_now.is_empty() {
            break;
        }
        let mut slot = vec![usize::MAX; stats.len()];
        for (s, &nd) in open_now.iter().enumerate() {
            slot[nd] = s;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = (0..features.n_features())
            .into_par_iter()
            .map(|f| scan_feature(f, features, cols, &pos, &slot, &open_now, &stats, g, h, config))
            .collect();
        let mut best: Vec<Option<Candidate>> = vec![None; open_now.len()];
        for cands in &per_feature {
            for (s, c) in cands.iter().enumerate() {
                if let Some(c) = c {
                    if best[s].is_none_or(|b| c.gain > b.gain) {
                        best[s] = Some(*c);
                    }
                }
            }
        }
        let mut next_open = Vec::new();
        for (s, &nd) in open_now.iter().enumerate() {
            if let Some(c) = best[s] {
                let l = stats.len();
                let r = l + 1;
                for _ in 0..2 {
                    depth.push(depth[nd] + 1);
                    splits.push(None);
                    stats.push(Stats { g: 0.0, h: 0.0, count: 0 });
                }
                splits[nd] = Some((c, l, r));
                next_open.push(l);
                next_open.push(r);
            }
        }
        if next_open.is_empty() {
            break;
        }
        for i in 0..n {
            let nd = pos[i] as usize;
            if pos[i] == DONE {
                continue;
            }
            if let Some((c, l, r)) = splits[nd] {
                let v = features.get(cols.rows[i], c.feature);
                let left = if v.is_nan() { c.default_left } else { v < c.threshold };
                pos[i] = if left { l as u32 } else { r as u32 };
            } else if slot[nd] != usize::MAX || depth[nd] >= config.max_depth {
                pos[i] = DONE;
            }
        }
        for &nd in &next_open {
            stats[nd] = node_stats(&pos, nd as u32, g, h);
        }
        open = next_open;
    }

    let mut nodes = Vec::with_capacity(stats.len());
    for (nd, st) in stats.iter().enumerate() {
        nodes.push(match splits[nd] {
            Some((c, l, r)) => Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left: l,
                right: r,
                default_left: c.default_left,
                gain: c.gain,
                cover: st.count as f64,
            },
            None => Node::Leaf { weight: leaf_weight(st.g, st.h, config.lambda), cover: st.count as f64 },
        });
    }
    Ok(RegressionTree { nodes })
}

fn node_stats(pos: &[u32], node: u32, g: &[f64], h: &[f64]) -> Stats {
    let mut s = Stats { g: 0.0, h: 0.0, count: 0 };
    for i in 0..pos.len() {
        if pos[i] == node {
            s.g += g[i];
            s.h += h[i];
            s.count += 1;
        }
    }
    s
}

#[derive(Clone, Copy)]
struct ScanState {
    gl: f64,
    hl: f64,
    prev: f64,
    started: bool,
    gm: f64,
    hm: f64,
}

#[allow(clippy::too_many_arguments)]
fn scan_feature(
    f: usize,
    features: &FeatureMatrix,
    cols: &SortedColumns,
    pos: &[u32],
    slot: &[usize],
    open: &[usize],
    stats: &[Stats],
    g: &[f64],
    h: &[f64],
    config: &TrainConfig,
) -> Vec<Option<Candidate>> {
    let slot_of = |i: usize| -> Option<usize> {
        let nd = pos[i] as usize;
        if pos[i] == u32::MAX || nd >= slot.len() {
            return None;
        }
        let s = slot[nd];
        (s != usize::MAX).then_some(s)
    };
    let mut st = vec![ScanState { gl: 0.0, hl: 0.0, prev: 0.0, started: false, gm: 0.0, hm: 0.0 }; open.len()];
    for &i in &cols.missing[f] {
        let i = i as usize;
        if let Some(s) = slot_of(i) {
            st[s].gm += g[i];
            st[s].hm += h[i];
        }
    }
    let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
    for &i in &cols.sorted[f] {
        let i = i as usize;
        let Some(s) = slot_of(i) else { continue };
        let v = features.get(cols.rows[i], f);
        let state = &mut st[s];
        if state.started && v > state.prev {
            let total = stats[open[s]];
            let mut thr = state.prev + (v - state.prev) / 2.0;
            if thr <= state.prev {
                thr = v;
            }
            // missing to the right first; left replaces it only if strictly better
            for default_left in [false, true] {
                let (gl, hl) =
                    if default_left { (state.gl + state.gm, state.hl + state.hm) } else { (state.gl, state.hl) };
                let (gr, hr) = (total.g - gl, total.h - hl);
                if hl < config.min_child_hessian || hr < config.min_child_hessian {
                    continue;
                }
                let gain = 0.5
                    * (score(gl, hl, config.lambda) + score(gr, hr, config.lambda)
                        - score(total.g, total.h, config.lambda))
                    - config.gamma_complexity;
                if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                    best[s] = Some(Candidate { gain, feature: f, threshold: thr, default_left });
                }
            }
        }
        state.gl += g[i];
        state.hl += h[i];
        state.prev = v;
        state.started = true;
    }
    best
}
