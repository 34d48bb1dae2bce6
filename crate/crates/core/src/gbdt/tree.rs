use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left; NaN follows `default_left`.
    Split {
        feature: u32,
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
        gain: f64,
        cover: u32,
    },
    Leaf {
        value: f64,
        cover: u32,
    },
}

impl Node {
    /// Number of training rows that reached the node.
    pub fn cover(&self) -> u32 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Arena of nodes; index 0 is the root and children always follow parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = x[*feature as usize];
                    let go_left = if v.is_nan() { *default_left } else { v <= *threshold };
                    i = if go_left { *left } else { *right } as usize;
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    /// Structural check used after deserialisation.
    pub(crate) fn validate(&self, n_features: Option<usize>) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("empty tree".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { value, .. } => {
                    if !value.is_finite() {
                        return Err(format!("leaf {i} has non-finite value"));
                    }
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has non-finite threshold"));
                    }
                    if n_features.is_some_and(|n| *feature as usize >= n) {
                        return Err(format!("node {i} splits on feature {feature} out of range"));
                    }
                    for &c in [left, right] {
                        let c = c as usize;
                        if c <= i || c >= self.nodes.len() {
                            return Err(format!("node {i} has invalid child {c}"));
                        }
                        parents[c] += 1;
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a tree".into());
        }
        Ok(())
    }
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
}

/// Per-feature row orders, computed once per fit.
pub(crate) struct Presorted {
    /// Observed rows sorted by value (ties by row index), with their values.
    rows: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
    missing: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &FeatureMatrix) -> Self {
        let n = x.n_rows();
        let per_feature: Vec<(Vec<u32>, Vec<f64>, Vec<u32>)> = (0..x.n_cols())
            .into_par_iter()
            .map(|f| {
                let mut obs: Vec<(f64, u32)> = Vec::with_capacity(n);
                let mut miss = Vec::new();
                for r in 0..n as u32 {
                    let v = x.get(r as usize, f);
                    if v.is_nan() {
                        miss.push(r);
                    } else {
                        obs.push((v, r));
                    }
                }
                obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let (vals, rows) = obs.into_iter().unzip();
                (rows, vals, miss)
            })
            .collect();
        let mut pre = Presorted {
            rows: Vec::with_capacity(per_feature.len()),
            values: Vec::with_capacity(per_feature.len()),
            missing: Vec::with_capacity(per_feature.len()),
        };
        for (r, v, m) in per_feature {
            pre.rows.push(r);
            pre.values.push(v);
            pre.missing.push(m);
        }
        pre
    }
}

#[derive(Debug, Clone, Copy)]
struct Sums {
    g: f64,
    h: f64,
    n: usize,
}

impl Sums {
    const ZERO: Sums = Sums { g: 0.0, h: 0.0, n: 0 };

    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
        self.n += 1;
    }

    fn plus(self, o: Sums) -> Sums {
        Sums {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }

    fn minus(self, o: Sums) -> Sums {
        Sums {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    default_left: bool,
    gain: f64,
}

struct BuildNode {
    sums: Sums,
    depth: usize,
    split: Option<(Candidate, usize, usize)>,
}

fn score(s: Sums, lambda: f64) -> f64 {
    s.g * s.g / (s.h + lambda)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = (a + b) / 2.0;
    let mid = if mid.is_finite() { mid } else { a * 0.5 + b * 0.5 };
    // Keep a <= threshold < b even when a and b are adjacent floats.
    if mid < b {
        mid
    } else {
        a
    }
}

/// Sampled observed rows of one feature in value order, grouped so that each
/// frontier node owns a contiguous range.
struct Segments {
    rows: Vec<u32>,
    values: Vec<f64>,
    /// `[start, end)` per frontier position.
    bounds: Vec<(usize, usize)>,
}

/// Greedy level-wise growth over the sampled `rows` and `features`.
pub(crate) fn grow(
    x: &FeatureMatrix,
    pre: &Presorted,
    grad: &[f64],
    hess: &[f64],
    rows: &[u32],
    features: &[usize],
    params: &GrowParams,
) -> Tree {
    const NONE: u32 = u32::MAX;
    let n = x.n_rows();
    let mut node_of = vec![NONE; n];
    let mut root = Sums::ZERO;
    for &r in rows {
        node_of[r as usize] = 0;
        root.add(grad[r as usize], hess[r as usize]);
    }
    let mut nodes = vec![BuildNode {
        sums: root,
        depth: 0,
        split: None,
    }];
    let mut frontier = vec![0usize];
    // Level 0 scans the presorted arrays in place; later levels own their segments.
    let mut segments: Vec<Option<Segments>> = features.iter().map(|_| None).collect();
    let mut go_left = vec![false; n];

    loop {
        let open: Vec<bool> = frontier
            .iter()
            .map(|&i| nodes[i].depth < params.max_depth && nodes[i].sums.n >= 2 * params.min_samples_leaf)
            .collect();
        if !open.iter().any(|&o| o) {
            break;
        }
        let mut pos_of = vec![NONE; nodes.len()];
        for (p, &i) in frontier.iter().enumerate() {
            pos_of[i] = p as u32;
        }
        let totals: Vec<Sums> = frontier.iter().map(|&i| nodes[i].sums).collect();

        let per_feature: Vec<Vec<Option<Candidate>>> = features
            .par_iter()
            .zip(&segments)
            .map(|(&f, seg)| {
                let (seg_rows, seg_values, bounds): (&[u32], &[f64], &[(usize, usize)]) = match seg {
                    Some(s) => (&s.rows, &s.values, &s.bounds),
                    None => (&pre.rows[f], &pre.values[f], &[(0, pre.rows[f].len())]),
                };
                let sampled = seg.is_none().then_some(node_of.as_slice());
                let mut miss = vec![Sums::ZERO; frontier.len()];
                for &r in &pre.missing[f] {
                    let node = node_of[r as usize];
                    if node != NONE {
                        miss[pos_of[node as usize] as usize].add(grad[r as usize], hess[r as usize]);
                    }
                }
                (0..frontier.len())
                    .map(|p| {
                        let (a, b) = bounds[p];
                        open[p].then(|| {
                            best_in_segment(
                                f,
                                &seg_rows[a..b],
                                &seg_values[a..b],
                                sampled,
                                grad,
                                hess,
                                totals[p],
                                miss[p],
                                params,
                            )
                        })?
                    })
                    .collect()
            })
            .collect();

        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        for feature_best in &per_feature {
            for (p, cand) in feature_best.iter().enumerate() {
                if let Some(c) = cand {
                    if best[p].is_none_or(|b| c.gain > b.gain) {
                        best[p] = Some(*c);
                    }
                }
            }
        }

        let mut next = Vec::new();
        for (p, &i) in frontier.iter().enumerate() {
            let Some(c) = best[p] else { continue };
            if c.gain <= 0.0 {
                continue;
            }
            let depth = nodes[i].depth + 1;
            let l = nodes.len();
            for _ in 0..2 {
                nodes.push(BuildNode {
                    sums: Sums::ZERO,
                    depth,
                    split: None,
                });
            }
            nodes[i].split = Some((c, l, l + 1));
            next.push(l);
            next.push(l + 1);
        }
        if next.is_empty() {
            break;
        }
        for &r in rows {
            let r = r as usize;
            if node_of[r] == NONE {
                continue;
            }
            let i = node_of[r] as usize;
            if let Some((c, l, rt)) = nodes[i].split {
                let v = x.get(r, c.feature);
                let left = if v.is_nan() { c.default_left } else { v <= c.threshold };
                let child = if left { l } else { rt };
                go_left[r] = left;
                node_of[r] = child as u32;
                nodes[child].sums.add(grad[r], hess[r]);
            } else {
                node_of[r] = NONE;
            }
        }
        let split_at: Vec<bool> = frontier.iter().map(|&i| nodes[i].split.is_some()).collect();
        segments.par_iter_mut().zip(features).for_each(|(seg, &f)| {
            let (seg_rows, seg_values, bounds): (&[u32], &[f64], Vec<(usize, usize)>) = match seg {
                Some(s) => (&s.rows, &s.values, s.bounds.clone()),
                None => (&pre.rows[f], &pre.values[f], vec![(0, pre.rows[f].len())]),
            };
            let mut rows_out = Vec::with_capacity(rows.len());
            let mut values_out = Vec::with_capacity(rows.len());
            let mut right_rows = Vec::new();
            let mut right_values = Vec::new();
            let mut new_bounds = Vec::with_capacity(2 * bounds.len());
            for (p, &(a, b)) in bounds.iter().enumerate() {
                if !split_at[p] {
                    continue;
                }
                let start = rows_out.len();
                right_rows.clear();
                right_values.clear();
                for k in a..b {
                    let r = seg_rows[k];
                    if node_of[r as usize] == NONE {
                        continue;
                    }
                    if go_left[r as usize] {
                        rows_out.push(r);
                        values_out.push(seg_values[k]);
                    } else {
                        right_rows.push(r);
                        right_values.push(seg_values[k]);
                    }
                }
                let mid = rows_out.len();
                rows_out.extend_from_slice(&right_rows);
                values_out.extend_from_slice(&right_values);
                new_bounds.push((start, mid));
                new_bounds.push((mid, rows_out.len()));
            }
            *seg = Some(Segments {
                rows: rows_out,
                values: values_out,
                bounds: new_bounds,
            });
        });
        frontier = next;
    }

    let out = nodes
        .iter()
        .map(|b| match b.split {
            Some((c, l, r)) => Node::Split {
                feature: c.feature as u32,
                threshold: c.threshold,
                default_left: c.default_left,
                left: l as u32,
                right: r as u32,
                gain: c.gain,
                cover: b.sums.n as u32,
            },
            None => Node::Leaf {
                value: -b.sums.g / (b.sums.h + params.lambda),
                cover: b.sums.n as u32,
            },
        })
        .collect();
    Tree::from_nodes(out)
}

/// Best split of one node on feature `f` from its rows in value order;
/// with `sampled`, rows whose node is `u32::MAX` are skipped.
///
/// Missing rows are tried on the left first; without missing rows both
/// directions are the same partition and the left default is kept.
#[allow(clippy::too_many_arguments)]
fn best_in_segment(
    f: usize,
    rows: &[u32],
    values: &[f64],
    sampled: Option<&[u32]>,
    grad: &[f64],
    hess: &[f64],
    total: Sums,
    miss: Sums,
    params: &GrowParams,
) -> Option<Candidate> {
    let lambda = params.lambda;
    let min_leaf = params.min_samples_leaf;
    let parent = score(total, lambda);
    let observed = total.minus(miss);
    let mut best: Option<Candidate> = None;
    let mut best_gain = f64::NEG_INFINITY;
    let mut left = Sums::ZERO;
    let mut last = f64::NAN;
    for (&r, &v) in rows.iter().zip(values) {
        if sampled.is_some_and(|node_of| node_of[r as usize] == u32::MAX) {
            continue;
        }
        if left.n > 0 && v > last {
            let right = observed.minus(left);
            for default_left in [true, false] {
                if !default_left && miss.n == 0 {
                    break;
                }
                let (l, rt) = if default_left {
                    (left.plus(miss), right)
                } else {
                    (left, right.plus(miss))
                };
                if l.n < min_leaf || rt.n < min_leaf {
                    continue;
                }
                let gain = 0.5 * (score(l, lambda) + score(rt, lambda) - parent);
                if gain > best_gain {
                    best_gain = gain;
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(last, v),
                        default_left,
                        gain,
                    });
                }
            }
        }
        left.add(grad[r as usize], hess[r as usize]);
        last = v;
    }
    best
}
