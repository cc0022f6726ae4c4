//! Binary decision tree over numeric attributes (information-gain splits at
//! midpoints), plus branch extraction.

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassId, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf_cases: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 8,
            min_leaf_cases: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        attribute: usize,
        threshold: f64,
        counts: Vec<usize>,
        /// Cases with value <= threshold.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn counts(&self) -> &[usize] {
        match self {
            TreeNode::Leaf { counts } | TreeNode::Split { counts, .. } => counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub config: TreeConfig,
    pub n_classes: usize,
}

fn majority(counts: &[usize]) -> ClassId {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

fn entropy(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum()
}

struct Builder<'a> {
    values: Vec<&'a [f64]>,
    labels: Vec<ClassId>,
    n_classes: usize,
    dim: usize,
    config: TreeConfig,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Best (gain, attribute, threshold); ties go to the lower attribute and
    /// the lower threshold.
    fn best_split(&self, idx: &[usize], parent: &[usize]) -> Option<(f64, usize, f64)> {
        let n = idx.len();
        let h = entropy(parent, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for a in 0..self.dim {
            order.sort_by(|&x, &y| {
                self.values[x][a]
                    .total_cmp(&self.values[y][a])
                    .then(x.cmp(&y))
            });
            let mut left = vec![0; self.n_classes];
            let mut right = parent.to_vec();
            for k in 0..n - 1 {
                let i = order[k];
                left[self.labels[i]] += 1;
                right[self.labels[i]] -= 1;
                let v = self.values[i][a];
                let next = self.values[order[k + 1]][a];
                if next <= v {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.config.min_leaf_cases || nr < self.config.min_leaf_cases {
                    continue;
                }
                let gain = h
                    - (nl as f64 * entropy(&left, nl) + nr as f64 * entropy(&right, nr)) / n as f64;
                let threshold = v + (next - v) / 2.0;
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, a, threshold));
                }
            }
        }
        best.filter(|(g, _, _)| *g > 1e-12)
    }

    fn build(&self, idx: &[usize], depth: usize) -> TreeNode {
        let counts = self.counts(idx);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure
            || depth >= self.config.max_depth
            || idx.len() < 2 * self.config.min_leaf_cases.max(1)
        {
            return TreeNode::Leaf { counts };
        }
        let Some((_, attribute, threshold)) = self.best_split(idx, &counts) else {
            return TreeNode::Leaf { counts };
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.values[i][attribute] <= threshold);
        TreeNode::Split {
            attribute,
            threshold,
            counts,
            left: Box::new(self.build(&l, depth + 1)),
            right: Box::new(self.build(&r, depth + 1)),
        }
    }
}

pub fn induce_tree(train: &Dataset, config: TreeConfig) -> DecisionTree {
    induce_tree_from(
        &train
            .cases
            .iter()
            .map(|c| c.values.as_slice())
            .collect::<Vec<_>>(),
        &train.cases.iter().map(|c| c.label).collect::<Vec<_>>(),
        train.class_count(),
        config,
    )
}

/// Same as [`induce_tree`] over bare rows.
pub fn induce_tree_from(
    values: &[&[f64]],
    labels: &[ClassId],
    n_classes: usize,
    config: TreeConfig,
) -> DecisionTree {
    let dim = values.first().map(|v| v.len()).unwrap_or(0);
    let b = Builder {
        values: values.to_vec(),
        labels: labels.to_vec(),
        n_classes,
        dim,
        config,
    };
    let idx: Vec<usize> = (0..values.len()).collect();
    DecisionTree {
        root: b.build(&idx, 0),
        config,
        n_classes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: usize,
    pub relation: Relation,
    pub threshold: f64,
}

impl Condition {
    pub fn holds(&self, values: &[f64]) -> bool {
        match self.relation {
            Relation::Le => values[self.attribute] <= self.threshold,
            Relation::Gt => values[self.attribute] > self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    /// Root first.
    pub conditions: Vec<Condition>,
    pub counts: Vec<usize>,
    pub purity: f64,
    pub predicted: ClassId,
}

impl Branch {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn matches(&self, values: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.holds(values))
    }

    /// Per-attribute closed interval implied by the conditions, starting from `bounds`.
    pub fn intervals(&self, bounds: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut out = bounds.to_vec();
        for c in &self.conditions {
            let iv = &mut out[c.attribute];
            match c.relation {
                Relation::Le => iv.1 = iv.1.min(c.threshold),
                Relation::Gt => iv.0 = iv.0.max(c.threshold),
            }
        }
        out
    }

    pub fn render(&self, names: &[String]) -> String {
        let conds: Vec<String> = self
            .conditions
            .iter()
            .map(|c| {
                let n = names
                    .get(c.attribute)
                    .cloned()
                    .unwrap_or_else(|| format!("X{}", c.attribute));
                let op = if c.relation == Relation::Le {
                    "<="
                } else {
                    ">"
                };
                format!("{n} {op} {}", c.threshold)
            })
            .collect();
        format!(
            "{} => class {} ({:.2}% of {})",
            if conds.is_empty() {
                "true".to_string()
            } else {
                conds.join(" & ")
            },
            self.predicted,
            self.purity * 100.0,
            self.total()
        )
    }
}

impl DecisionTree {
    pub fn predict(&self, values: &[f64]) -> ClassId {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { counts } => return majority(counts),
                TreeNode::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if values[*attribute] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Index of the leaf reached by `values`, in [`DecisionTree::branches`] order.
    pub fn leaf_index(&self, values: &[f64]) -> usize {
        fn walk(n: &TreeNode, values: &[f64], base: usize) -> usize {
            match n {
                TreeNode::Leaf { .. } => base,
                TreeNode::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if values[*attribute] <= *threshold {
                        walk(left, values, base)
                    } else {
                        walk(right, values, base + leaves(left))
                    }
                }
            }
        }
        fn leaves(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => leaves(left) + leaves(right),
            }
        }
        walk(&self.root, values, 0)
    }

    pub fn leaf_count(&self) -> usize {
        fn walk(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => walk(left) + walk(right),
            }
        }
        walk(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn walk(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// Every root-to-leaf branch, left subtrees first.
    pub fn branches(&self) -> Vec<Branch> {
        fn walk(n: &TreeNode, path: &mut Vec<Condition>, out: &mut Vec<Branch>) {
            match n {
                TreeNode::Leaf { counts } => {
                    let total: usize = counts.iter().sum();
                    let predicted = majority(counts);
                    out.push(Branch {
                        conditions: path.clone(),
                        counts: counts.clone(),
                        purity: if total > 0 {
                            counts[predicted] as f64 / total as f64
                        } else {
                            0.0
                        },
                        predicted,
                    });
                }
                TreeNode::Split {
                    attribute,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    for (rel, child) in [(Relation::Le, left), (Relation::Gt, right)] {
                        path.push(Condition {
                            attribute: *attribute,
                            relation: rel,
                            threshold: *threshold,
                        });
                        walk(child, path, out);
                        path.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    /// Attributes in order of first use, shallowest splits first.
    pub fn attribute_order(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut level = vec![&self.root];
        while !level.is_empty() {
            let mut next = Vec::new();
            for n in level {
                if let TreeNode::Split {
                    attribute,
                    left,
                    right,
                    ..
                } = n
                {
                    if !out.contains(attribute) {
                        out.push(*attribute);
                    }
                    next.push(left.as_ref());
                    next.push(right.as_ref());
                }
            }
            level = next;
        }
        out
    }
}

/// Leaf branches with purity at least `purity_min`, largest first.
pub fn select_branches(tree: &DecisionTree, purity_min: f64) -> Vec<Branch> {
    let mut b: Vec<Branch> = tree
        .branches()
        .into_iter()
        .filter(|b| b.total() > 0 && b.purity >= purity_min)
        .collect();
    b.sort_by_key(|x| std::cmp::Reverse(x.total()));
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(rows: &[(f64, ClassId)], cfg: TreeConfig) -> DecisionTree {
        let vals: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0]).collect();
        let refs: Vec<&[f64]> = vals.iter().map(|v| v.as_slice()).collect();
        let labels: Vec<ClassId> = rows.iter().map(|r| r.1).collect();
        induce_tree_from(&refs, &labels, 2, cfg)
    }

    #[test]
    fn two_cases_split_at_midpoint() {
        let t = fit(
            &[(1.0, 0), (3.0, 1)],
            TreeConfig {
                max_depth: 8,
                min_leaf_cases: 1,
            },
        );
        match &t.root {
            TreeNode::Split {
                threshold,
                attribute,
                ..
            } => {
                assert_eq!(*attribute, 0);
                assert_eq!(*threshold, 2.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.predict(&[0.0]), 0);
        assert_eq!(t.predict(&[5.0]), 1);
    }

    #[test]
    fn single_class_is_one_leaf() {
        let t = fit(&[(1.0, 0), (2.0, 0), (3.0, 0)], TreeConfig::default());
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn branch_purity_thresholds() {
        let mut rows: Vec<(f64, ClassId)> = (0..90).map(|i| (i as f64, 0)).collect();
        rows.extend((0..10).map(|i| (i as f64 + 0.5, 1)));
        let t = fit(
            &rows,
            TreeConfig {
                max_depth: 0,
                min_leaf_cases: 1,
            },
        );
        assert_eq!(select_branches(&t, 0.9).len(), 1);
        assert!(select_branches(&t, 0.95).is_empty());
    }

    #[test]
    fn deterministic() {
        let rows: Vec<(f64, ClassId)> = (0..50).map(|i| ((i * 7 % 13) as f64, i % 2)).collect();
        let cfg = TreeConfig::default();
        assert_eq!(fit(&rows, cfg), fit(&rows, cfg));
    }
}
