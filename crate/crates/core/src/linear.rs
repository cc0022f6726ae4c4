//! Threshold models over projections of a polyline node onto a line in the
//! plane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::Decision;
use crate::dataset::{ClassId, Dataset};
use crate::error::{Error, Result};
use crate::projection::{Point, ProjectionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "node")]
pub enum NodeSelector {
    #[default]
    Last,
    Index {
        k: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionLine {
    pub p0: Point,
    pub p1: Point,
    #[serde(default)]
    pub node_selector: NodeSelector,
}

impl ProjectionLine {
    pub fn new(p0: Point, p1: Point, node_selector: NodeSelector) -> Result<Self> {
        if p0 == p1 {
            return Err(Error::Linear("line endpoints coincide".into()));
        }
        Ok(ProjectionLine {
            p0,
            p1,
            node_selector,
        })
    }

    /// Position of the orthogonal projection of `q`, with `p0 -> 0`, `p1 -> 1`.
    pub fn position(&self, q: Point) -> Result<f64> {
        let dx = self.p1.x - self.p0.x;
        let dy = self.p1.y - self.p0.y;
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 || !len2.is_finite() {
            return Err(Error::Linear("degenerate line".into()));
        }
        Ok(((q.x - self.p0.x) * dx + (q.y - self.p0.y) * dy) / len2)
    }
}

fn selected_node(values: &[f64], spec: &ProjectionSpec, sel: NodeSelector) -> Result<Point> {
    let nodes = spec.nodes(values)?;
    let k = match sel {
        NodeSelector::Last => nodes.len().saturating_sub(1),
        NodeSelector::Index { k } => k,
    };
    nodes
        .get(k)
        .copied()
        .ok_or_else(|| Error::Linear(format!("node {k} does not exist ({} nodes)", nodes.len())))
}

pub fn score(values: &[f64], spec: &ProjectionSpec, line: &ProjectionLine) -> Result<f64> {
    line.position(selected_node(values, spec, line.node_selector)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearForm {
    /// `M(x) > T => C`, otherwise refuse.
    OneSided,
    /// `M(x) > T => C`, else `Q`.
    TwoSided,
    /// Two one-sided terms that must both hold.
    Conjunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTerm {
    pub line: ProjectionLine,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub form: LinearForm,
    pub terms: Vec<LinearTerm>,
    pub positive_class: ClassId,
    pub negative_class: ClassId,
}

impl LinearModel {
    pub fn check(&self) -> Result<()> {
        let want = if self.form == LinearForm::Conjunction {
            2
        } else {
            1
        };
        if self.terms.len() != want {
            return Err(Error::Linear(format!(
                "{:?} needs {want} terms, got {}",
                self.form,
                self.terms.len()
            )));
        }
        Ok(())
    }
}

pub fn classify_linear(
    model: &LinearModel,
    values: &[f64],
    spec: &ProjectionSpec,
) -> Result<Decision> {
    model.check()?;
    let mut all = true;
    for t in &model.terms {
        if score(values, spec, &t.line)? <= t.threshold {
            all = false;
            break;
        }
    }
    Ok(match (all, model.form) {
        (true, _) => Decision::Class(model.positive_class),
        (false, LinearForm::TwoSided) => Decision::Class(model.negative_class),
        (false, _) => Decision::Refuse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSearch {
    pub positive_class: ClassId,
    pub negative_class: ClassId,
    /// Directions tried over the full circle; thresholds are swept exactly.
    pub angles: usize,
    pub refine_rounds: usize,
    pub recall_floor: f64,
    pub node_selector: NodeSelector,
    /// Node of the second term for the conjunction form.
    pub second_node: NodeSelector,
}

impl LinearSearch {
    pub fn new(positive_class: ClassId, negative_class: ClassId) -> Self {
        LinearSearch {
            positive_class,
            negative_class,
            angles: 36,
            refine_rounds: 8,
            recall_floor: 0.5,
            node_selector: NodeSelector::Last,
            second_node: NodeSelector::Last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinear {
    pub model: LinearModel,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub search: LinearSearch,
}

#[derive(Debug, Clone, Copy)]
struct Cut {
    angle: f64,
    /// Threshold on the raw dot product with the unit direction.
    raw: f64,
    tp: usize,
    fp: usize,
    fn_: usize,
    tn: usize,
}

impl Cut {
    fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }
    fn recall(&self) -> f64 {
        let p = self.tp + self.fn_;
        if p == 0 {
            1.0
        } else {
            self.tp as f64 / p as f64
        }
    }
    fn accuracy(&self) -> f64 {
        let n = self.tp + self.fp + self.fn_ + self.tn;
        if n == 0 {
            1.0
        } else {
            (self.tp + self.tn) as f64 / n as f64
        }
    }
}

/// Lexicographic objective: higher is better.
fn objective(c: &Cut, form: LinearForm, floor: f64) -> (bool, f64, f64) {
    match form {
        LinearForm::TwoSided => (true, c.accuracy(), c.recall()),
        _ => (c.recall() >= floor - 1e-12, c.precision(), c.recall()),
    }
}

fn better(a: &Cut, b: &Cut, form: LinearForm, floor: f64) -> bool {
    let (oa, ob) = (objective(a, form, floor), objective(b, form, floor));
    match oa.partial_cmp(&ob) {
        Some(std::cmp::Ordering::Greater) => true,
        Some(std::cmp::Ordering::Less) => false,
        _ => a.angle < b.angle || (a.angle == b.angle && a.raw < b.raw),
    }
}

/// Best threshold for one direction by sweeping every distinct score.
fn best_cut(points: &[(Point, bool)], angle: f64, form: LinearForm, floor: f64) -> Cut {
    let (s, c) = angle.sin_cos();
    let mut scored: Vec<(f64, bool)> = points
        .iter()
        .map(|(p, pos)| (p.x * c + p.y * s, *pos))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let pos_total = scored.iter().filter(|x| x.1).count();
    let neg_total = scored.len() - pos_total;
    let top = scored.first().map(|x| x.0).unwrap_or(0.0);
    // Predict nothing positive.
    let mut best = Cut {
        angle,
        raw: top + 1.0,
        tp: 0,
        fp: 0,
        fn_: pos_total,
        tn: neg_total,
    };
    let (mut tp, mut fp) = (0, 0);
    for i in 0..scored.len() {
        if scored[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let next = scored.get(i + 1).map(|x| x.0);
        if next == Some(scored[i].0) {
            continue;
        }
        let raw = match next {
            Some(n) => n + (scored[i].0 - n) / 2.0,
            None => scored[i].0 - 1.0,
        };
        let cut = Cut {
            angle,
            raw,
            tp,
            fp,
            fn_: pos_total - tp,
            tn: neg_total - fp,
        };
        if better(&cut, &best, form, floor) {
            best = cut;
        }
    }
    best
}

fn search_direction(
    points: &[(Point, bool)],
    form: LinearForm,
    floor: f64,
    cfg: &LinearSearch,
) -> Cut {
    let n = cfg.angles.max(1);
    let step = std::f64::consts::TAU / n as f64;
    let pick = |cuts: Vec<Cut>| {
        cuts.into_iter()
            .reduce(|a, b| if better(&b, &a, form, floor) { b } else { a })
            .expect("at least one angle")
    };
    let mut best = pick(
        (0..n)
            .into_par_iter()
            .map(|i| best_cut(points, i as f64 * step, form, floor))
            .collect(),
    );
    let mut delta = step / 2.0;
    for _ in 0..cfg.refine_rounds {
        let cands = vec![
            best,
            best_cut(points, best.angle - delta, form, floor),
            best_cut(points, best.angle + delta, form, floor),
        ];
        best = pick(cands);
        delta /= 2.0;
    }
    best
}

/// Turns a direction/threshold into a line spanning the projected data with
/// the threshold expressed on the normalized score.
fn to_term(points: &[(Point, bool)], cut: &Cut, sel: NodeSelector) -> Result<LinearTerm> {
    let (s, c) = cut.angle.sin_cos();
    let proj: Vec<f64> = points.iter().map(|(p, _)| p.x * c + p.y * s).collect();
    let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (0.0, 1.0)
    };
    let len = hi - lo;
    let p0 = Point::new(lo * c, lo * s);
    let p1 = Point::new(hi * c, hi * s);
    Ok(LinearTerm {
        line: ProjectionLine::new(p0, p1, sel)?,
        threshold: (cut.raw - lo) / len,
    })
}

fn labeled_points(
    dataset: &Dataset,
    spec: &ProjectionSpec,
    sel: NodeSelector,
    cfg: &LinearSearch,
) -> Result<Vec<(usize, Point, bool)>> {
    dataset
        .cases
        .iter()
        .enumerate()
        .filter(|(_, c)| c.label == cfg.positive_class || c.label == cfg.negative_class)
        .map(|(i, c)| {
            Ok((
                i,
                selected_node(&c.values, spec, sel)?,
                c.label == cfg.positive_class,
            ))
        })
        .collect()
}

fn measure(
    model: &LinearModel,
    dataset: &Dataset,
    spec: &ProjectionSpec,
    cfg: &LinearSearch,
) -> Result<(f64, f64, f64)> {
    let (mut tp, mut fp, mut pos, mut correct, mut n) = (0, 0, 0, 0, 0);
    for c in &dataset.cases {
        if c.label != cfg.positive_class && c.label != cfg.negative_class {
            continue;
        }
        n += 1;
        let is_pos = c.label == cfg.positive_class;
        if is_pos {
            pos += 1;
        }
        let d = classify_linear(model, &c.values, spec)?;
        if d == Decision::Class(cfg.positive_class) {
            if is_pos {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if d == Decision::Class(c.label) {
            correct += 1;
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if pos == 0 {
        1.0
    } else {
        tp as f64 / pos as f64
    };
    let accuracy = if n == 0 {
        1.0
    } else {
        correct as f64 / n as f64
    };
    Ok((precision, recall, accuracy))
}

/// Searches line direction and threshold. One-sided and conjunction forms
/// maximize precision subject to `recall_floor`; two-sided maximizes accuracy.
pub fn fit_linear(
    dataset: &Dataset,
    spec: &ProjectionSpec,
    form: LinearForm,
    cfg: &LinearSearch,
) -> Result<FittedLinear> {
    let pts = labeled_points(dataset, spec, cfg.node_selector, cfg)?;
    if pts.is_empty() {
        return Err(Error::Linear("no cases of the target classes".into()));
    }
    let plain: Vec<(Point, bool)> = pts.iter().map(|(_, p, b)| (*p, *b)).collect();
    let first_form = if form == LinearForm::TwoSided {
        form
    } else {
        LinearForm::OneSided
    };
    let cut = search_direction(&plain, first_form, cfg.recall_floor, cfg);
    let mut terms = vec![to_term(&plain, &cut, cfg.node_selector)?];
    let mut floor_ok = objective(&cut, first_form, cfg.recall_floor).0;

    if form == LinearForm::Conjunction {
        let passing: Vec<usize> = pts
            .iter()
            .filter(|(i, _, _)| {
                score(&dataset.cases[*i].values, spec, &terms[0].line)
                    .is_ok_and(|s| s > terms[0].threshold)
            })
            .map(|(i, _, _)| *i)
            .collect();
        let sub = dataset.subset(&passing);
        let second: Vec<(Point, bool)> = labeled_points(&sub, spec, cfg.second_node, cfg)?
            .into_iter()
            .map(|(_, p, b)| (p, b))
            .collect();
        let r1 = cut.recall().max(1e-12);
        let floor2 = (cfg.recall_floor / r1).min(1.0);
        let cut2 = if second.is_empty() {
            cut
        } else {
            search_direction(&second, LinearForm::OneSided, floor2, cfg)
        };
        floor_ok = floor_ok && objective(&cut2, LinearForm::OneSided, floor2).0;
        let base = if second.is_empty() { &plain } else { &second };
        terms.push(to_term(base, &cut2, cfg.second_node)?);
    }

    let model = LinearModel {
        form,
        terms,
        positive_class: cfg.positive_class,
        negative_class: cfg.negative_class,
    };
    let (precision, recall, accuracy) = measure(&model, dataset, spec, cfg)?;
    let fitted = FittedLinear {
        model,
        precision,
        recall,
        accuracy,
        search: *cfg,
    };
    if !floor_ok {
        return Err(Error::RecallFloor {
            floor: cfg.recall_floor,
            best_recall: recall,
            best: Box::new(fitted),
        });
    }
    Ok(fitted)
}
