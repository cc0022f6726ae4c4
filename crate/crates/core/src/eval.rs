//! Per-rule precision/recall, weighted precision and cross-validation.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{join_rules, prune, Decision, PruneMode, RuleSet};
use crate::dataset::{normalize, stratified_split, ClassId, Dataset, Normalization, SplitPlan};
use crate::error::{Error, Result};
use crate::guide::{dc_fit, group_subset, ClassHierarchy, DcModel, NodeConfig, TraceStep};
use crate::projection::project_dataset;
use crate::tree::{induce_tree, DecisionTree, TreeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

/// Anything that maps a case to the rule chain that decided it.
pub trait Predictor: Sync {
    fn trace(&self, values: &[f64]) -> Result<Vec<TraceStep>>;
    /// Every `(node, rule)` slot with its display name and predicted class
    /// (`None` for intermediate or refusing rules).
    fn rule_slots(&self) -> Vec<(usize, usize, String, Option<ClassId>)>;
}

impl Predictor for RuleSet {
    fn trace(&self, values: &[f64]) -> Result<Vec<TraceStep>> {
        let p = crate::projection::project_values(values, &self.projection)?;
        let fired = self.firing_rule(&p);
        Ok(vec![TraceStep {
            node: 0,
            rule: fired.map(|f| f.0),
            decision: self.classify_polyline(&p),
            terminal: true,
        }])
    }

    fn rule_slots(&self) -> Vec<(usize, usize, String, Option<ClassId>)> {
        self.rules
            .iter()
            .enumerate()
            .map(|(i, r)| (0, i, r.name.clone(), r.predicted_class()))
            .collect()
    }
}

impl Predictor for DcModel {
    fn trace(&self, values: &[f64]) -> Result<Vec<TraceStep>> {
        DcModel::trace(self, values)
    }

    fn rule_slots(&self) -> Vec<(usize, usize, String, Option<ClassId>)> {
        let mut out = Vec::new();
        for (n, node) in self.nodes.iter().enumerate() {
            for (i, r) in node.ruleset.rules.iter().enumerate() {
                let class = r
                    .predicted_class()
                    .and_then(|g| (node.groups[g].len() == 1).then(|| node.groups[g][0]));
                let name = if self.nodes.len() > 1 {
                    format!("N{}.{}", n + 1, r.name)
                } else {
                    r.name.clone()
                };
                out.push((n, i, name, class));
            }
        }
        out
    }
}

impl Predictor for DecisionTree {
    fn trace(&self, values: &[f64]) -> Result<Vec<TraceStep>> {
        Ok(vec![TraceStep {
            node: 0,
            rule: Some(self.leaf_index(values)),
            decision: Decision::Class(self.predict(values)),
            terminal: true,
        }])
    }

    fn rule_slots(&self) -> Vec<(usize, usize, String, Option<ClassId>)> {
        self.branches()
            .into_iter()
            .enumerate()
            .map(|(i, b)| (0, i, format!("L{}", i + 1), Some(b.predicted)))
            .collect()
    }
}

/// Always predicts one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstantPredictor(pub ClassId);

impl Predictor for ConstantPredictor {
    fn trace(&self, _values: &[f64]) -> Result<Vec<TraceStep>> {
        Ok(vec![TraceStep {
            node: 0,
            rule: Some(0),
            decision: Decision::Class(self.0),
            terminal: true,
        }])
    }

    fn rule_slots(&self) -> Vec<(usize, usize, String, Option<ClassId>)> {
        vec![(0, 0, "R1".into(), Some(self.0))]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: String,
    pub node: usize,
    pub index: usize,
    /// Class named by the rule; `None` for intermediate or refusing rules.
    pub predicted_class: Option<ClassId>,
    /// Cases the rule decided (c_i).
    pub classified: usize,
    pub correct: usize,
    /// `correct / classified`; `None` when nothing was classified.
    pub precision: Option<f64>,
    /// `correct / class total in the split`.
    pub recall: Option<f64>,
    pub terminal: bool,
    pub split: SplitName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub class: ClassId,
    pub name: String,
    pub total: usize,
    pub classified: usize,
    pub correct: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: SplitName,
    pub fold: Option<usize>,
    pub cases: usize,
    pub refused: usize,
    pub outcomes: Vec<RuleOutcome>,
    pub per_class: Vec<ClassAggregate>,
    /// Over terminal rules; `None` when nothing was classified.
    pub weighted_precision: Option<f64>,
}

/// Per-rule firing counts of `predictor` on `dataset`.
pub fn rule_metrics(
    predictor: &dyn Predictor,
    dataset: &Dataset,
    split: SplitName,
) -> Result<Vec<RuleOutcome>> {
    let slots = predictor.rule_slots();
    let traces: Vec<Vec<TraceStep>> = dataset
        .cases
        .par_iter()
        .map(|c| predictor.trace(&c.values))
        .collect::<Result<_>>()?;
    let mut totals = vec![0; dataset.class_count()];
    for c in &dataset.cases {
        totals[c.label] += 1;
    }
    let mut out: Vec<RuleOutcome> = slots
        .iter()
        .map(|(node, index, name, class)| RuleOutcome {
            rule: name.clone(),
            node: *node,
            index: *index,
            predicted_class: *class,
            classified: 0,
            correct: 0,
            precision: None,
            recall: None,
            terminal: class.is_some(),
            split,
        })
        .collect();
    for (case, trace) in dataset.cases.iter().zip(&traces) {
        let Some(last) = trace.last() else { continue };
        let Some(rule) = last.rule else { continue };
        if last.decision == Decision::Refuse {
            continue;
        }
        if let Some(o) = out
            .iter_mut()
            .find(|o| o.node == last.node && o.index == rule)
        {
            o.classified += 1;
            if last.decision == Decision::Class(case.label) {
                o.correct += 1;
            }
        }
    }
    for o in &mut out {
        if o.classified > 0 {
            o.precision = Some(o.correct as f64 / o.classified as f64);
        }
        if let Some(c) = o.predicted_class {
            if totals[c] > 0 {
                o.recall = Some(o.correct as f64 / totals[c] as f64);
            }
        }
    }
    Ok(out)
}

/// `P = sum(p_i c_i) / sum(c_i)` over `(p_i, c_i)` pairs.
pub fn weighted_precision_of(pairs: &[(f64, usize)]) -> Result<f64> {
    let total: usize = pairs.iter().map(|p| p.1).sum();
    if total == 0 {
        return Err(Error::NoClassifiedCases);
    }
    Ok(pairs.iter().map(|(p, c)| p * *c as f64).sum::<f64>() / total as f64)
}

/// Weighted precision over the outcomes accepted by `include`.
pub fn weighted_precision(
    outcomes: &[RuleOutcome],
    include: impl Fn(&RuleOutcome) -> bool,
) -> Result<f64> {
    let pairs: Vec<(f64, usize)> = outcomes
        .iter()
        .filter(|o| include(o) && o.classified > 0)
        .map(|o| (o.precision.unwrap_or(0.0), o.classified))
        .collect();
    weighted_precision_of(&pairs)
}

pub fn evaluate(
    predictor: &dyn Predictor,
    dataset: &Dataset,
    split: SplitName,
    fold: Option<usize>,
) -> Result<EvaluationReport> {
    let outcomes = rule_metrics(predictor, dataset, split)?;
    let mut per_class: Vec<ClassAggregate> = dataset
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| ClassAggregate {
            class: i,
            name: c.name.clone(),
            total: c.count,
            classified: 0,
            correct: 0,
            precision: None,
            recall: None,
        })
        .collect();
    for o in outcomes.iter().filter(|o| o.terminal) {
        if let Some(c) = o.predicted_class {
            per_class[c].classified += o.classified;
            per_class[c].correct += o.correct;
        }
    }
    for a in &mut per_class {
        if a.classified > 0 {
            a.precision = Some(a.correct as f64 / a.classified as f64);
        }
        if a.total > 0 {
            a.recall = Some(a.correct as f64 / a.total as f64);
        }
    }
    let classified: usize = outcomes
        .iter()
        .filter(|o| o.terminal)
        .map(|o| o.classified)
        .sum();
    let refused = dataset.len() - classified;
    let weighted_precision = weighted_precision(&outcomes, |o| o.terminal).ok();
    Ok(EvaluationReport {
        split,
        fold,
        cases: dataset.len(),
        refused,
        outcomes,
        per_class,
        weighted_precision,
    })
}

pub fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "-".to_string(),
    }
}

impl EvaluationReport {
    /// Rule table: name, precision, recall, cases.
    pub fn render_rules(&self) -> String {
        let mut s = format!(
            "{:<16} {:>10} {:>10} {:>8}\n",
            "Rule", "Precision", "Recall", "Cases"
        );
        for o in &self.outcomes {
            let _ = writeln!(
                s,
                "{:<16} {:>10} {:>10} {:>8}",
                o.rule,
                pct(o.precision),
                pct(o.recall),
                o.classified
            );
        }
        let _ = writeln!(
            s,
            "Weighted precision {}  refused {}",
            pct(self.weighted_precision),
            self.refused
        );
        s
    }

    /// Class table: precision and classified count per class.
    pub fn render_classes(&self) -> String {
        let mut s = format!(
            "{:<16} {:>10} {:>10} {:>8}\n",
            "Class", "Precision", "Recall", "Cases"
        );
        for a in &self.per_class {
            let _ = writeln!(
                s,
                "{:<16} {:>10} {:>10} {:>8}",
                format!("{} {}", a.class + 1, a.name),
                pct(a.precision),
                pct(a.recall),
                a.classified
            );
        }
        let _ = writeln!(s, "Weighted precision {}", pct(self.weighted_precision));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    pub min_cases: usize,
    pub mode: PruneMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    /// Box rules per hierarchy node, optionally pruned and joined.
    Boxes {
        normalization: Normalization,
        hierarchy: Option<ClassHierarchy>,
        /// One per hierarchy node; the last is reused for extra nodes.
        nodes: Vec<NodeConfig>,
        prune: Option<PruneStep>,
        join: bool,
    },
    Tree {
        normalization: Normalization,
        config: TreeConfig,
    },
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Boxes(DcModel),
    Tree(DecisionTree),
    Majority(ConstantPredictor),
}

impl Model {
    pub fn predictor(&self) -> &dyn Predictor {
        match self {
            Model::Boxes(m) => m,
            Model::Tree(t) => t,
            Model::Majority(c) => c,
        }
    }
}

impl Pipeline {
    pub fn normalization(&self) -> Normalization {
        match self {
            Pipeline::Boxes { normalization, .. } | Pipeline::Tree { normalization, .. } => {
                *normalization
            }
            Pipeline::Majority => Normalization::Raw,
        }
    }

    /// Fits on `train`, which must already be normalized as configured.
    pub fn fit(&self, train: &Dataset) -> Result<Model> {
        match self {
            Pipeline::Majority => {
                let best = train
                    .classes
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.count.cmp(&b.1.count).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .ok_or_else(|| Error::Empty("no classes".into()))?;
                Ok(Model::Majority(ConstantPredictor(best)))
            }
            Pipeline::Tree { config, .. } => Ok(Model::Tree(induce_tree(train, *config))),
            Pipeline::Boxes {
                hierarchy,
                nodes,
                prune: prune_step,
                join,
                ..
            } => {
                let h = hierarchy
                    .clone()
                    .unwrap_or_else(|| ClassHierarchy::flat(train.class_count()));
                let mut model = dc_fit(train, &h, nodes)?;
                if prune_step.is_some() || *join {
                    for node in &mut model.nodes {
                        let ds = group_subset(train, &node.groups);
                        let polylines = project_dataset(&ds, &node.ruleset.projection)?;
                        if let Some(p) = prune_step {
                            node.ruleset = prune(&node.ruleset, p.min_cases, p.mode, &polylines)?.0;
                        }
                        if *join {
                            node.ruleset = join_rules(&node.ruleset, &polylines);
                        }
                    }
                }
                Ok(Model::Boxes(model))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train: EvaluationReport,
    pub validation: EvaluationReport,
    pub test: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub plan: SplitPlan,
    pub pipeline: Pipeline,
    pub folds: Vec<FoldReport>,
    /// Mean of the per-fold test weighted precision (folds with none excluded).
    pub average_test_wp: Option<f64>,
}

impl CvReport {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<6} {:>10} {:>12} {:>10}\n",
            "Fold", "Training", "Validation", "Testing"
        );
        for f in &self.folds {
            let _ = writeln!(
                s,
                "{:<6} {:>10} {:>12} {:>10}",
                f.fold + 1,
                pct(f.train.weighted_precision),
                pct(f.validation.weighted_precision),
                pct(f.test.weighted_precision)
            );
        }
        let _ = writeln!(
            s,
            "Average test weighted precision {}",
            pct(self.average_test_wp)
        );
        s
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `pipeline` on every partition of `plan`; each fold fits on its own
/// training part only.
pub fn cross_validate(
    dataset: &Dataset,
    pipeline: &Pipeline,
    plan: &SplitPlan,
) -> Result<CvReport> {
    let ds = normalize(dataset, pipeline.normalization());
    let parts = stratified_split(&ds, plan)?;
    let folds = parts
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let train = ds.subset(&p.train);
            let model = pipeline.fit(&train)?;
            let pr = model.predictor();
            Ok(FoldReport {
                fold: k,
                train: evaluate(pr, &train, SplitName::Train, Some(k))?,
                validation: evaluate(
                    pr,
                    &ds.subset(&p.validation),
                    SplitName::Validation,
                    Some(k),
                )?,
                test: evaluate(pr, &ds.subset(&p.test), SplitName::Test, Some(k))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let average_test_wp = mean(folds.iter().filter_map(|f| f.test.weighted_precision));
    Ok(CvReport {
        plan: *plan,
        pipeline: pipeline.clone(),
        folds,
        average_test_wp,
    })
}

/// Reference comparison figures, reported as-is.
pub const STATIC_BASELINES: [(&str, f64); 2] = [("KNN", 93.51), ("C4.5", 96.95)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub config: TreeConfig,
    pub plan: SplitPlan,
    pub tree_depth: usize,
    pub tree_leaves: usize,
    pub train: EvaluationReport,
    pub validation: EvaluationReport,
    pub test: EvaluationReport,
    pub static_rows: Vec<(String, f64)>,
}

impl BaselineReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (name, r) in [
            ("Training", &self.train),
            ("Validation", &self.validation),
            ("Testing", &self.test),
        ] {
            let _ = writeln!(s, "{name} ({} cases)", r.cases);
            s.push_str(&r.render_classes());
        }
        for (name, v) in &self.static_rows {
            let _ = writeln!(s, "{name:<16} {v:>9.2}%");
        }
        s
    }
}

/// Tree baseline on a single holdout partition.
pub fn baseline_tree_report(
    dataset: &Dataset,
    plan: &SplitPlan,
    config: TreeConfig,
    normalization: Normalization,
) -> Result<BaselineReport> {
    let ds = normalize(dataset, normalization);
    let parts = stratified_split(&ds, plan)?;
    let p = parts
        .first()
        .ok_or_else(|| Error::Split("plan produced no partition".into()))?;
    let train = ds.subset(&p.train);
    let tree = induce_tree(&train, config);
    Ok(BaselineReport {
        config,
        plan: *plan,
        tree_depth: tree.depth(),
        tree_leaves: tree.leaf_count(),
        train: evaluate(&tree, &train, SplitName::Train, None)?,
        validation: evaluate(
            &tree,
            &ds.subset(&p.validation),
            SplitName::Validation,
            None,
        )?,
        test: evaluate(&tree, &ds.subset(&p.test), SplitName::Test, None)?,
        static_rows: STATIC_BASELINES
            .iter()
            .map(|(n, v)| (n.to_string(), *v))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_precision_example() {
        let p = weighted_precision_of(&[(0.9, 100), (0.8, 200)]).unwrap();
        assert!((p * 100.0 - 83.333_333).abs() < 1e-4);
    }

    #[test]
    fn single_and_equal_weights() {
        assert!((weighted_precision_of(&[(0.7, 12)]).unwrap() - 0.7).abs() < 1e-12);
        let p = weighted_precision_of(&[(0.5, 10), (1.0, 10)]).unwrap();
        assert!((p - 0.75).abs() < 1e-12);
    }

    #[test]
    fn nothing_classified_is_an_error() {
        assert!(matches!(
            weighted_precision_of(&[(1.0, 0)]),
            Err(Error::NoClassifiedCases)
        ));
    }
}
