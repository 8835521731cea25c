use std::fmt::Write as _;

use rand::seq::index::sample;

use super::{argmax_counts, validate, Classifier, MlError, Regressor, Targets};
use crate::rng;

const FORMAT_HEADER: &str = "tabfuzz-tree v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_samples_leaf: 1, max_features: None, seed: 0 }
    }
}

impl TreeParams {
    /// Depth-limited settings used for the discriminator.
    pub fn discriminator() -> Self {
        TreeParams { max_depth: Some(12), min_samples_leaf: 5, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    Counts(Vec<usize>),
    Mean(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(Leaf),
}

/// CART tree: Gini impurity for classes, variance for values.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    targets: Targets<'a>,
    params: TreeParams,
    n_features: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    // position in the sorted index list where the right side starts
    pos: usize,
    proxy: f64,
}

impl DecisionTree {
    pub fn fit(x: &[Vec<f64>], targets: Targets<'_>, params: TreeParams) -> Result<Self, MlError> {
        let indices: Vec<usize> = (0..x.len()).collect();
        Self::fit_indices(x, targets, &indices, params)
    }

    /// Fits on the rows named by `indices` (repeats allowed, as in a
    /// bootstrap sample).
    pub fn fit_indices(
        x: &[Vec<f64>],
        targets: Targets<'_>,
        indices: &[usize],
        params: TreeParams,
    ) -> Result<Self, MlError> {
        let n_features = validate(x, &targets)?;
        if indices.is_empty() {
            return Err(MlError::Empty);
        }
        let n_classes = match targets {
            Targets::Classes { n_classes, .. } => n_classes,
            Targets::Values(_) => 0,
        };
        let mut builder = Builder {
            x,
            targets,
            params: TreeParams { min_samples_leaf: params.min_samples_leaf.max(1), ..params },
            n_features,
            rng: rng::seeded(params.seed),
            nodes: Vec::new(),
        };
        let mut idx = indices.to_vec();
        builder.grow(&mut idx, 0);
        Ok(DecisionTree { nodes: builder.nodes, n_features, n_classes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_classifier(&self) -> bool {
        self.n_classes > 0
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf(&self, x: &[f64]) -> &Leaf {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(leaf) => return leaf,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn check_arity(&self, x: &[f64]) -> Result<(), MlError> {
        if x.len() == self.n_features {
            Ok(())
        } else {
            Err(MlError::Arity { expected: self.n_features, found: x.len() })
        }
    }

    /// Serialises to a line-oriented text format. Floats are written as
    /// IEEE-754 bit patterns so the round trip is exact on every platform.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "features {}", self.n_features);
        let _ = writeln!(out, "classes {}", self.n_classes);
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for node in &self.nodes {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    let _ = writeln!(out, "split {feature} {:016x} {left} {right}", threshold.to_bits());
                }
                Node::Leaf(Leaf::Counts(c)) => {
                    let counts: Vec<String> = c.iter().map(usize::to_string).collect();
                    let _ = writeln!(out, "counts {}", counts.join(" "));
                }
                Node::Leaf(Leaf::Mean(m)) => {
                    let _ = writeln!(out, "mean {:016x}", m.to_bits());
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MlError> {
        let bad = |m: &str| MlError::Format(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("unrecognised header"));
        }
        let mut field = |key: &str| -> Result<usize, MlError> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };
        let n_features = field("features")?;
        let n_classes = field("classes")?;
        let n_nodes = field("nodes")?;
        let bits = |s: &str| u64::from_str_radix(s, 16).map(f64::from_bits).map_err(|_| bad("bad float"));
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let mut nodes = Vec::with_capacity(n_nodes);
        for line in lines.by_ref().take(n_nodes) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let node = match parts.as_slice() {
                ["split", f, t, l, r] => {
                    Node::Split { feature: num(f)?, threshold: bits(t)?, left: num(l)?, right: num(r)? }
                }
                ["counts", rest @ ..] => Node::Leaf(Leaf::Counts(rest.iter().map(|s| num(s)).collect::<Result<_, _>>()?)),
                ["mean", m] => Node::Leaf(Leaf::Mean(bits(m)?)),
                _ => return Err(bad("bad node line")),
            };
            nodes.push(node);
        }
        if nodes.len() != n_nodes || nodes.is_empty() {
            return Err(bad("node count mismatch"));
        }
        for node in &nodes {
            if let Node::Split { feature, left, right, .. } = node {
                if *feature >= n_features || *left >= n_nodes || *right >= n_nodes {
                    return Err(bad("dangling reference"));
                }
            }
        }
        Ok(DecisionTree { nodes, n_features, n_classes })
    }
}

impl Classifier for DecisionTree {
    fn predict_one(&self, x: &[f64]) -> usize {
        match self.leaf(x) {
            Leaf::Counts(c) => argmax_counts(c),
            Leaf::Mean(m) => m.round().max(0.0) as usize,
        }
    }
}

impl Regressor for DecisionTree {
    fn predict_value(&self, x: &[f64]) -> f64 {
        match self.leaf(x) {
            Leaf::Mean(m) => *m,
            Leaf::Counts(c) => argmax_counts(c) as f64,
        }
    }
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(idx)));
        let at_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        if at_limit || idx.len() < 2 * self.params.min_samples_leaf || self.is_pure(idx) {
            return id;
        }
        let Some(split) = self.best_split(idx) else {
            return id;
        };
        let feature = split.feature;
        idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
        let (l, r) = idx.split_at_mut(split.pos);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold: split.threshold, left, right };
        id
    }

    fn leaf_value(&self, idx: &[usize]) -> Leaf {
        match self.targets {
            Targets::Classes { labels, n_classes } => {
                let mut counts = vec![0; n_classes];
                for &i in idx {
                    counts[labels[i]] += 1;
                }
                Leaf::Counts(counts)
            }
            Targets::Values(y) => Leaf::Mean(idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64),
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match self.targets {
            Targets::Classes { labels, .. } => idx.iter().all(|&i| labels[i] == labels[idx[0]]),
            Targets::Values(y) => idx.iter().all(|&i| y[i] == y[idx[0]]),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match self.params.max_features {
            Some(k) if k < self.n_features => {
                let mut f = sample(&mut self.rng, self.n_features, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        }
    }

    /// Best split over the candidate features. The proxy being maximised is
    /// `sum_k n_k,left^2 / n_left + (same for right)` for Gini and
    /// `S_left^2 / n_left + S_right^2 / n_right` for variance; both are
    /// monotone in the impurity decrease. Ties keep the earliest feature and
    /// the lowest threshold.
    fn best_split(&mut self, idx: &[usize]) -> Option<Split> {
        let min_leaf = self.params.min_samples_leaf;
        let n = idx.len();
        let mut best: Option<Split> = None;
        let mut order = idx.to_vec();
        for feature in self.candidate_features() {
            order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));
            let value = |k: usize| self.x[order[k]][feature];
            let mut scan = Scan::new(&self.targets, &order);
            for pos in 1..n {
                scan.move_left(order[pos - 1]);
                if pos < min_leaf || n - pos < min_leaf || value(pos - 1) == value(pos) {
                    continue;
                }
                let proxy = scan.proxy(pos, n);
                let better = match &best {
                    None => true,
                    Some(b) => proxy > b.proxy + 1e-12 * b.proxy.abs().max(1.0),
                };
                if better {
                    let (lo, hi) = (value(pos - 1), value(pos));
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid >= hi { lo } else { mid };
                    best = Some(Split { feature, threshold, pos, proxy });
                }
            }
        }
        best
    }
}

/// Running left/right sufficient statistics while sweeping a sorted index list.
enum Scan<'a> {
    Classes { labels: &'a [usize], left: Vec<f64>, right: Vec<f64> },
    Values { y: &'a [f64], left: f64, right: f64 },
}

impl<'a> Scan<'a> {
    fn new(targets: &Targets<'a>, order: &[usize]) -> Self {
        match *targets {
            Targets::Classes { labels, n_classes } => {
                let mut right = vec![0.0; n_classes];
                for &i in order {
                    right[labels[i]] += 1.0;
                }
                Scan::Classes { labels, left: vec![0.0; n_classes], right }
            }
            Targets::Values(y) => Scan::Values { y, left: 0.0, right: order.iter().map(|&i| y[i]).sum() },
        }
    }

    fn move_left(&mut self, i: usize) {
        match self {
            Scan::Classes { labels, left, right } => {
                left[labels[i]] += 1.0;
                right[labels[i]] -= 1.0;
            }
            Scan::Values { y, left, right } => {
                *left += y[i];
                *right -= y[i];
            }
        }
    }

    fn proxy(&self, n_left: usize, n: usize) -> f64 {
        let (nl, nr) = (n_left as f64, (n - n_left) as f64);
        match self {
            Scan::Classes { left, right, .. } => {
                left.iter().map(|c| c * c).sum::<f64>() / nl + right.iter().map(|c| c * c).sum::<f64>() / nr
            }
            Scan::Values { left, right, .. } => left * left / nl + right * right / nr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(labels: &[usize]) -> Targets<'_> {
        Targets::Classes { labels, n_classes: 2 }
    }

    #[test]
    fn midpoint_split() {
        let x = vec![vec![0.0], vec![10.0]];
        let t = DecisionTree::fit(&x, classes(&[0, 1]), TreeParams::default()).unwrap();
        match &t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 5.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.predict(&x), [0, 1]);
        assert_eq!(t.predict_one(&[3.0]), 0);
    }

    #[test]
    fn pure_root_is_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let t = DecisionTree::fit(&x, classes(&[1, 1, 1]), TreeParams::default()).unwrap();
        assert_eq!(t.nodes().len(), 1);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(DecisionTree::fit(&[], classes(&[]), TreeParams::default()), Err(MlError::Empty));
    }

    #[test]
    fn tie_prefers_low_feature_and_threshold() {
        // both features separate the classes identically
        let x = vec![vec![0.0, 5.0], vec![1.0, 6.0], vec![2.0, 7.0], vec![3.0, 8.0]];
        let t = DecisionTree::fit(&x, classes(&[0, 0, 1, 1]), TreeParams::default()).unwrap();
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, threshold, .. } if threshold == 1.5));
    }

    #[test]
    fn regression_means() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { 3.0 }).collect();
        let t = DecisionTree::fit(&x, Targets::Values(&y), TreeParams { max_depth: Some(1), ..Default::default() })
            .unwrap();
        assert_eq!(t.predict_value(&[2.0]), 1.0);
        assert_eq!(t.predict_value(&[7.0]), 3.0);
        assert!(matches!(t.nodes()[0], Node::Split { threshold, .. } if threshold == 4.5));
    }

    #[test]
    fn min_leaf_and_depth_respected() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let labels: Vec<usize> = (0..40).map(|i| (i * 3 % 5 == 0) as usize).collect();
        let params = TreeParams { max_depth: Some(3), min_samples_leaf: 5, ..Default::default() };
        let t = DecisionTree::fit(&x, classes(&labels), params).unwrap();
        assert!(t.depth() <= 3);
        for node in t.nodes() {
            if let Node::Leaf(Leaf::Counts(c)) = node {
                assert!(c.iter().sum::<usize>() >= 5);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 * 0.1, (i % 4) as f64]).collect();
        let labels: Vec<usize> = (0..30).map(|i| (i % 3 == 0) as usize).collect();
        let t = DecisionTree::fit(&x, classes(&labels), TreeParams::default()).unwrap();
        assert_eq!(DecisionTree::from_text(&t.to_text()).unwrap(), t);
        let y: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let t = DecisionTree::fit(&x, Targets::Values(&y), TreeParams::default()).unwrap();
        assert_eq!(DecisionTree::from_text(&t.to_text()).unwrap(), t);
        assert!(DecisionTree::from_text("garbage").is_err());
    }
}
