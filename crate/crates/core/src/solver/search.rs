//! Best-first branch-and-bound for the multiple-choice covering problem
//!
//! ```text
//! min  sum_v cost(v, k_v)   s.t.  sum_v gain(v, k_v) >= need
//! ```
//!
//! with at most one non-zero choice per linked group and a set of forbidden
//! supports. Variables are fixed one at a time in a static order; the bound
//! at a node is the committed cost plus the LP relaxation of the remaining
//! variables, which is the convex piecewise-linear function obtained by
//! merging the lower convex hulls of each variable's `(gain, cost)` points.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

/// Relative tolerance under which two costs are treated as equal.
pub(crate) const TIE_TOL: f64 = 1e-12;

pub(crate) fn tie_tol(cost: f64) -> f64 {
    TIE_TOL * cost.abs().max(1.0)
}

const ROOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Choice {
    pub gain: f64,
    pub cost: f64,
    pub action: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Var {
    pub feature: usize,
    pub group: Option<usize>,
    pub zero: usize,
    pub choices: Vec<Choice>,
}

impl Var {
    fn max_gain(&self) -> f64 {
        self.choices.iter().map(|c| c.gain).fold(0.0, f64::max)
    }

    /// Slopes and widths of the lower convex hull of `{(0,0)} ∪ {(g,c): g > 0}`.
    fn hull_segments(&self) -> Vec<(f64, f64)> {
        let mut points: Vec<(f64, f64)> = self
            .choices
            .iter()
            .filter(|c| c.gain > 0.0)
            .map(|c| (c.gain, c.cost))
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup_by(|later, earlier| later.0 == earlier.0);
        let mut hull: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        for p in points {
            while hull.len() >= 2 {
                let o = hull[hull.len() - 2];
                let a = hull[hull.len() - 1];
                let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.windows(2)
            .map(|w| {
                let width = w[1].0 - w[0].0;
                ((w[1].1 - w[0].1) / width, width)
            })
            .collect()
    }
}

/// Convex lower bound on the cost of collecting a given gain.
#[derive(Debug, Clone)]
struct Envelope {
    /// Breakpoints `(cumulative gain, cumulative cost)` starting at the origin.
    points: Vec<(f64, f64)>,
}

impl Envelope {
    fn from_segments(mut segments: Vec<(f64, f64)>) -> Self {
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points = Vec::with_capacity(segments.len() + 1);
        let (mut g, mut c) = (0.0, 0.0);
        points.push((g, c));
        for (slope, width) in segments {
            g += width;
            c += slope * width;
            points.push((g, c));
        }
        Envelope { points }
    }

    fn eval(&self, required: f64) -> f64 {
        if required <= 0.0 {
            return 0.0;
        }
        let i = self.points.partition_point(|p| p.0 < required);
        if i >= self.points.len() {
            // beyond the LP range; the gain screen rejects such nodes
            return self.points.last().map_or(0.0, |p| p.1);
        }
        let (g1, c1) = self.points[i];
        let (g0, c0) = self.points[i - 1];
        let t = ((required - g0) / (g1 - g0)).clamp(0.0, 1.0);
        // never exceed the exact breakpoint cost through rounding
        (c0 + t * (c1 - c0)).min(c1)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub cost: f64,
    pub support: Vec<usize>,
    pub abs_sum: f64,
    /// Choice index per variable.
    pub choices: Vec<usize>,
}

impl Candidate {
    /// Deterministic preference: lower cost, then smaller support, then
    /// lexicographically smaller support, then smaller total `|a|`.
    pub fn better_than(&self, other: &Candidate) -> bool {
        let tol = tie_tol(other.cost);
        if self.cost < other.cost - tol {
            return true;
        }
        if self.cost > other.cost + tol {
            return false;
        }
        self.support
            .len()
            .cmp(&other.support.len())
            .then_with(|| self.support.cmp(&other.support))
            .then_with(|| self.abs_sum.total_cmp(&other.abs_sum))
            == Ordering::Less
    }
}

#[derive(Debug)]
struct Node {
    lb: f64,
    cost: f64,
    gain: f64,
    depth: usize,
    path: u32,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the "greatest" node is the one to expand next.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lb
            .total_cmp(&self.lb)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

pub(crate) struct Search<'a> {
    vars: Vec<Var>,
    need: f64,
    excluded: &'a BTreeSet<Vec<usize>>,
    suffix_max_gain: Vec<f64>,
    suffix_bound: Vec<Envelope>,
}

pub(crate) struct Outcome {
    pub best: Option<Candidate>,
    pub nodes: u64,
}

impl<'a> Search<'a> {
    /// `need` is the total gain the chosen actions must reach.
    pub fn new(mut vars: Vec<Var>, need: f64, excluded: &'a BTreeSet<Vec<usize>>) -> Self {
        // decide the most influential features first
        vars.sort_by(|a, b| b.max_gain().total_cmp(&a.max_gain()).then(a.feature.cmp(&b.feature)));
        let n = vars.len();
        let mut suffix_max_gain = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix_max_gain[i] = suffix_max_gain[i + 1] + vars[i].max_gain();
        }
        let hulls: Vec<Vec<(f64, f64)>> = vars.iter().map(Var::hull_segments).collect();
        let mut suffix_bound = Vec::with_capacity(n + 1);
        for i in 0..=n {
            suffix_bound.push(Envelope::from_segments(hulls[i..].concat()));
        }
        Search {
            vars,
            need,
            excluded,
            suffix_max_gain,
            suffix_bound,
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn group_conflict(&self, arena: &[(u32, u32)], mut path: u32, depth: usize, group: usize) -> bool {
        let mut d = depth;
        while path != ROOT {
            d -= 1;
            let (parent, k) = arena[path as usize];
            let var = &self.vars[d];
            if var.group == Some(group) && k as usize != var.zero {
                return true;
            }
            path = parent;
        }
        false
    }

    fn candidate(&self, arena: &[(u32, u32)], mut path: u32, depth: usize, cost: f64) -> Candidate {
        let mut choices: Vec<usize> = self.vars.iter().map(|v| v.zero).collect();
        let mut d = depth;
        while path != ROOT {
            d -= 1;
            let (parent, k) = arena[path as usize];
            choices[d] = k as usize;
            path = parent;
        }
        let mut support = Vec::new();
        let mut abs_sum = 0.0;
        for (var, &k) in self.vars.iter().zip(&choices) {
            if k != var.zero {
                support.push(var.feature);
                abs_sum += var.choices[k].action.abs();
            }
        }
        support.sort_unstable();
        Candidate {
            cost,
            support,
            abs_sum,
            choices,
        }
    }

    pub fn run(&self) -> Outcome {
        let n = self.vars.len();
        let mut nodes = 0u64;
        let mut best: Option<Candidate> = None;
        if self.suffix_max_gain[0] < self.need {
            return Outcome { best, nodes };
        }
        let mut arena: Vec<(u32, u32)> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        heap.push(Node {
            lb: self.suffix_bound[0].eval(self.need),
            cost: 0.0,
            gain: 0.0,
            depth: 0,
            path: ROOT,
            seq,
        });

        while let Some(node) = heap.pop() {
            if let Some(inc) = &best {
                if node.lb > inc.cost + tie_tol(inc.cost) {
                    break;
                }
            }
            nodes += 1;
            if node.gain >= self.need {
                // leaving the remaining features untouched dominates every
                // other completion unless that support is forbidden
                let cand = self.candidate(&arena, node.path, node.depth, node.cost);
                if !self.excluded.contains(&cand.support) {
                    if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                        best = Some(cand);
                    }
                    continue;
                }
            }
            if node.depth == n {
                continue;
            }
            let var = &self.vars[node.depth];
            let rest_gain = self.suffix_max_gain[node.depth + 1];
            let rest_bound = &self.suffix_bound[node.depth + 1];
            let conflict = var
                .group
                .is_some_and(|g| self.group_conflict(&arena, node.path, node.depth, g));
            for (k, choice) in var.choices.iter().enumerate() {
                if conflict && k != var.zero {
                    continue;
                }
                let gain = node.gain + choice.gain;
                if gain + rest_gain < self.need {
                    continue;
                }
                let cost = node.cost + choice.cost;
                let lb = cost + rest_bound.eval(self.need - gain);
                if let Some(inc) = &best {
                    if lb > inc.cost + tie_tol(inc.cost) {
                        continue;
                    }
                }
                arena.push((node.path, k as u32));
                seq += 1;
                heap.push(Node {
                    lb,
                    cost,
                    gain,
                    depth: node.depth + 1,
                    path: (arena.len() - 1) as u32,
                    seq,
                });
            }
        }
        Outcome { best, nodes }
    }
}
