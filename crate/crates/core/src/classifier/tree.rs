use rand::seq::index::sample;
use rand::Rng;

/// Gini improvements smaller than this are treated as ties.
const GINI_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Class probabilities `[p0, p1]` over the bootstrap rows reaching the leaf.
    Leaf { proba: [f64; 2], n: usize },
}

/// CART classification tree grown with Gini impurity. `x <= threshold` goes left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Grower<'a, R: Rng> {
    features: &'a [Vec<f64>],
    labels: &'a [u8],
    min_leaf: usize,
    mtry: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Grower<'_, R> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let pos = rows.iter().filter(|&&r| self.labels[r] == 1).count();
        let p1 = pos as f64 / rows.len() as f64;
        self.nodes.push(Node::Leaf { proba: [1.0 - p1, p1], n: rows.len() });
        self.nodes.len() - 1
    }

    /// Best `(feature, threshold, weighted gini)`; ties go to the lowest feature, then lowest threshold.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let d = self.features[0].len();
        let mut candidates = sample(self.rng, d, self.mtry.min(d)).into_vec();
        candidates.sort_unstable();

        let n = rows.len();
        let total_pos = rows.iter().filter(|&&r| self.labels[r] == 1).count();
        let parent = gini(total_pos, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
        for f in candidates {
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (self.features[r][f], self.labels[r])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += pairs[i].1 as usize;
                let n_left = i + 1;
                if pairs[i].0 == pairs[i + 1].0 || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let score = (n_left as f64 * gini(left_pos, n_left)
                    + (n - n_left) as f64 * gini(total_pos - left_pos, n - n_left))
                    / n as f64;
                if score >= parent - GINI_EPS {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| score < b - GINI_EPS) {
                    let (lo, hi) = (pairs[i].0, pairs[i + 1].0);
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((f, threshold, score));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &[usize]) -> usize {
        let pos = rows.iter().filter(|&&r| self.labels[r] == 1).count();
        if pos == 0 || pos == rows.len() || rows.len() < 2 * self.min_leaf {
            return self.leaf(rows);
        }
        let Some((feature, threshold, _)) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.features[r][feature] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
        let left = self.grow(&left_rows);
        let right = self.grow(&right_rows);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on `rows` (indices into `features`, duplicates allowed), drawing `mtry`
    /// candidate features per node from `rng`.
    pub fn grow<R: Rng>(
        features: &[Vec<f64>],
        labels: &[u8],
        rows: &[usize],
        min_leaf: usize,
        mtry: usize,
        rng: &mut R,
    ) -> Self {
        let mut g = Grower { features, labels, min_leaf: min_leaf.max(1), mtry: mtry.max(1), rng, nodes: Vec::new() };
        g.grow(rows);
        DecisionTree { nodes: g.nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by `row`.
    pub fn apply(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> [f64; 2] {
        match self.nodes[self.apply(row)] {
            Node::Leaf { proba, .. } => proba,
            Node::Split { .. } => unreachable!("apply ends at a leaf"),
        }
    }

    /// Split features in pre-order.
    pub fn split_features(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn is_single_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}
