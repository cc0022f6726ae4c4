//! Local box explanations with sandwich points, tree-form rendering of boxes
//! and a small SVG emitter for headless plots.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{BoxStats, Decision, Membership, Rect, Rule, RuleSet};
use crate::dataset::{ClassId, Dataset};
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::guide::TraceStep;
use crate::projection::{
    project_dataset, project_values, Point, Polyline2D, ProjectionMode, ProjectionSpec,
};

/// Adapts a plain scoring function to [`Predictor`].
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> Option<ClassId> + Sync,
{
    fn trace(&self, values: &[f64]) -> Result<Vec<TraceStep>> {
        let decision = match (self.0)(values) {
            Some(c) => Decision::Class(c),
            None => Decision::Refuse,
        };
        Ok(vec![TraceStep {
            node: 0,
            rule: Some(0),
            decision,
            terminal: true,
        }])
    }

    fn rule_slots(&self) -> Vec<(usize, usize, String, Option<ClassId>)> {
        vec![(0, 0, "f".into(), None)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRequest {
    pub point: Vec<f64>,
    pub purity_threshold: f64,
    pub initial_resolution: f64,
    pub decrement: f64,
    /// Smallest grid step tried; defaults to the smallest attribute quantum.
    pub floor: Option<f64>,
}

impl ExplanationRequest {
    pub fn new(
        point: Vec<f64>,
        purity_threshold: f64,
        initial_resolution: f64,
        decrement: f64,
    ) -> Self {
        ExplanationRequest {
            point,
            purity_threshold,
            initial_resolution,
            decrement,
            floor: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.purity_threshold > 0.0 && self.purity_threshold <= 1.0) {
            return Err(Error::Grid(format!(
                "purity threshold {} outside (0, 1]",
                self.purity_threshold
            )));
        }
        if !(self.decrement > 0.0 && self.decrement < self.initial_resolution) {
            return Err(Error::Grid(format!(
                "need 0 < decrement < resolution, got {} and {}",
                self.decrement, self.initial_resolution
            )));
        }
        if let Some(f) = self.floor {
            if f.is_nan() || f <= 0.0 {
                return Err(Error::Grid(format!(
                    "resolution floor {f} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Explained,
    NoBoxFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainingBox {
    pub rect: Rect,
    pub class: ClassId,
    pub counts: Vec<usize>,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSandwich {
    pub lower_row: usize,
    pub lower: Vec<f64>,
    pub upper_row: usize,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtificialSandwich {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Attributes moved away from the explained point.
    pub constrained: Vec<usize>,
}

/// Polylines for the plot: the explained point and its sandwich points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationPlot {
    pub point: Polyline2D,
    pub training: Option<(Polyline2D, Polyline2D)>,
    pub artificial: Option<(Polyline2D, Polyline2D)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub verdict: Verdict,
    pub predicted: Option<ClassId>,
    /// Qualifying boxes, best first (purity desc, then area asc).
    pub boxes: Vec<ExplainingBox>,
    pub resolution: Option<f64>,
    /// Membership used to decide which boxes the point belongs to.
    pub membership: Membership,
    /// Membership the explained classifier uses for its own boxes.
    pub classifier_membership: Option<Membership>,
    pub sandwich_training: Option<TrainingSandwich>,
    pub sandwich_artificial: Option<ArtificialSandwich>,
    pub plot: ExplanationPlot,
}

fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

fn decide(predictor: &dyn Predictor, values: &[f64]) -> Result<Decision> {
    Ok(predictor
        .trace(values)?
        .last()
        .map(|s| s.decision)
        .unwrap_or(Decision::Refuse))
}

/// Grid cells of step `r` that the polyline `c` crosses or ends in, scored
/// against the training projection.
fn qualifying_cells(
    c: &Polyline2D,
    training: &[Polyline2D],
    n_classes: usize,
    class: ClassId,
    r: f64,
    threshold: f64,
) -> Vec<ExplainingBox> {
    let mode = Membership::EdgeCross;
    let (mut lo, mut hi) = (
        Point::new(f64::INFINITY, f64::INFINITY),
        Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in &c.nodes {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.x.is_finite() {
        return Vec::new();
    }
    let (i0, i1) = ((lo.x / r).floor() as i64, (hi.x / r).floor() as i64);
    let (j0, j1) = ((lo.y / r).floor() as i64, (hi.y / r).floor() as i64);
    let mut cells = Vec::new();
    for i in i0..=i1 {
        for j in j0..=j1 {
            let rect = Rect {
                x1: i as f64 * r,
                x2: (i + 1) as f64 * r,
                y1: j as f64 * r,
                y2: (j + 1) as f64 * r,
            };
            if mode.test(c, &rect) {
                cells.push(rect);
            }
        }
    }
    let mut out: Vec<ExplainingBox> = cells
        .par_iter()
        .filter_map(|rect| {
            let mut counts = vec![0; n_classes];
            for p in training {
                if let Some(l) = p.label() {
                    if mode.test(p, rect) {
                        counts[l] += 1;
                    }
                }
            }
            let stats = BoxStats::from_counts(counts);
            let purity = stats.purity_fraction?;
            (stats.dominant == Some(class) && purity >= threshold).then_some(ExplainingBox {
                rect: *rect,
                class,
                counts: stats.counts,
                purity,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        b.purity
            .total_cmp(&a.purity)
            .then(a.rect.area().total_cmp(&b.rect.area()))
            .then(a.rect.lex_cmp(&b.rect))
    });
    out
}

/// Closest training members of `b` (same class) below and above `c`.
fn training_sandwich(
    c: &[f64],
    b: &ExplainingBox,
    training: &Dataset,
    polylines: &[Polyline2D],
) -> Option<TrainingSandwich> {
    let dist = |v: &[f64]| v.iter().zip(c).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mut lower: Option<(f64, usize)> = None;
    let mut upper: Option<(f64, usize)> = None;
    for (k, (case, p)) in training.cases.iter().zip(polylines).enumerate() {
        if case.label != b.class || !Membership::EdgeCross.test(p, &b.rect) {
            continue;
        }
        let d = dist(&case.values);
        if leq(&case.values, c) && lower.is_none_or(|(best, _)| d < best) {
            lower = Some((d, k));
        }
        if leq(c, &case.values) && upper.is_none_or(|(best, _)| d < best) {
            upper = Some((d, k));
        }
    }
    let (l, u) = (lower?.1, upper?.1);
    Some(TrainingSandwich {
        lower_row: training.cases[l].source_row,
        lower: training.cases[l].values.clone(),
        upper_row: training.cases[u].source_row,
        upper: training.cases[u].values.clone(),
    })
}

/// Moves the attributes of the first node of `c` inside `rect` to the box
/// bounds (clipped to the observed attribute range), keeping that node in
/// the box. Falls back to halving the move, and finally to `d = e = c`.
fn artificial_sandwich(
    c: &[f64],
    rect: &Rect,
    spec: &ProjectionSpec,
    bounds: &[(f64, f64)],
) -> Result<ArtificialSandwich> {
    let nodes = spec.nodes(c)?;
    let inside = |v: &[f64]| -> Result<bool> {
        Ok(Membership::EdgeCross.test(&project_values(v, spec)?, rect))
    };
    let Some(k) = nodes.iter().position(|p| rect.contains(*p)) else {
        return Ok(ArtificialSandwich {
            lower: c.to_vec(),
            upper: c.to_vec(),
            constrained: Vec::new(),
        });
    };
    let (h, v) = spec.provenance()[k];
    let mut attrs = vec![h];
    if v != h {
        attrs.push(v);
    }
    let mut lower = c.to_vec();
    let mut upper = c.to_vec();
    for &a in &attrs {
        let mut probe = c.to_vec();
        probe[a] += 1.0;
        let moved = spec.nodes(&probe)?[k];
        let gx = moved.x - nodes[k].x;
        let gy = moved.y - nodes[k].y;
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (g, pos, lo, hi) in [
            (gx, nodes[k].x, rect.x1, rect.x2),
            (gy, nodes[k].y, rect.y1, rect.y2),
        ] {
            if g.abs() < 1e-15 {
                continue;
            }
            let (a1, a2) = ((lo - pos) / g, (hi - pos) / g);
            t_lo = t_lo.max(a1.min(a2));
            t_hi = t_hi.min(a1.max(a2));
        }
        let (bmin, bmax) = bounds
            .get(a)
            .copied()
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let t_lo = t_lo
            .clamp(f64::NEG_INFINITY, 0.0)
            .max(bmin.min(c[a]) - c[a]);
        let t_hi = t_hi.clamp(0.0, f64::INFINITY).min(bmax.max(c[a]) - c[a]);
        lower[a] = c[a] + if t_lo.is_finite() { t_lo } else { 0.0 };
        upper[a] = c[a] + if t_hi.is_finite() { t_hi } else { 0.0 };
    }
    for side in [&mut lower, &mut upper] {
        let mut ok = false;
        for _ in 0..40 {
            if inside(side)? {
                ok = true;
                break;
            }
            for (s, x) in side.iter_mut().zip(c) {
                *s = x + (*s - x) / 2.0;
            }
        }
        if !ok {
            side.copy_from_slice(c);
        }
    }
    debug_assert!(leq(&lower, c) && leq(c, &upper));
    Ok(ArtificialSandwich {
        lower,
        upper,
        constrained: attrs,
    })
}

/// Shrinks the grid from `initial_resolution` by `decrement` until some cell
/// crossed by the point's polyline is dominated by the predicted class with
/// purity at least the threshold.
pub fn explain_local(
    request: &ExplanationRequest,
    predictor: &dyn Predictor,
    training: &Dataset,
    spec: &ProjectionSpec,
) -> Result<Explanation> {
    request.check()?;
    let c = &request.point;
    let point = project_values(c, spec)?;
    let polylines = project_dataset(training, spec)?;
    let floor = request.floor.unwrap_or_else(|| {
        (0..training.dimension())
            .map(|i| training.quantum(i))
            .fold(f64::INFINITY, f64::min)
            .min(request.initial_resolution)
    });
    let mut out = Explanation {
        verdict: Verdict::NoBoxFound,
        predicted: None,
        boxes: Vec::new(),
        resolution: None,
        membership: Membership::EdgeCross,
        classifier_membership: None,
        sandwich_training: None,
        sandwich_artificial: None,
        plot: ExplanationPlot {
            point: point.clone(),
            training: None,
            artificial: None,
        },
    };
    let Decision::Class(class) = decide(predictor, c)? else {
        return Ok(out);
    };
    out.predicted = Some(class);

    let steps = ((request.initial_resolution - floor) / request.decrement)
        .floor()
        .max(0.0) as usize;
    for s in 0..=steps.min(100_000) {
        let r = request.initial_resolution - s as f64 * request.decrement;
        if r < floor - 1e-12 || r <= 0.0 {
            break;
        }
        let boxes = qualifying_cells(
            &point,
            &polylines,
            training.class_count(),
            class,
            r,
            request.purity_threshold,
        );
        if boxes.is_empty() {
            continue;
        }
        let best = &boxes[0];
        let bounds: Vec<(f64, f64)> = training
            .attributes
            .iter()
            .map(|a| (a.observed_min, a.observed_max))
            .collect();
        let art = artificial_sandwich(c, &best.rect, spec, &bounds)?;
        let tr = training_sandwich(c, best, training, &polylines);
        out.plot.artificial = Some((
            project_values(&art.lower, spec)?,
            project_values(&art.upper, spec)?,
        ));
        if let Some(t) = &tr {
            out.plot.training = Some((
                project_values(&t.lower, spec)?,
                project_values(&t.upper, spec)?,
            ));
        }
        out.verdict = Verdict::Explained;
        out.resolution = Some(r);
        out.sandwich_artificial = Some(art);
        out.sandwich_training = tr;
        out.boxes = boxes;
        return Ok(out);
    }
    Ok(out)
}

/// Explains several points in parallel.
pub fn explain_batch(
    requests: &[ExplanationRequest],
    predictor: &dyn Predictor,
    training: &Dataset,
    spec: &ProjectionSpec,
) -> Result<Vec<Explanation>> {
    requests
        .par_iter()
        .map(|r| explain_local(r, predictor, training, spec))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCondition {
    /// `x` or `y` in projection space.
    pub axis: char,
    pub bound: Bound,
    pub threshold: f64,
}

/// One box as a single-branch tree: `T1x <= x <= T2x` and `T1y <= y <= T2y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeChain {
    pub box_id: usize,
    pub conditions: Vec<ChainCondition>,
    /// Original attributes `(horizontal, vertical)` of the nodes whose
    /// coordinate ranges the box can hold.
    pub attributes: Vec<(usize, usize)>,
}

impl TreeChain {
    pub fn from_rect(box_id: usize, rect: &Rect, attributes: Vec<(usize, usize)>) -> Self {
        let c = |axis, bound, threshold| ChainCondition {
            axis,
            bound,
            threshold,
        };
        TreeChain {
            box_id,
            conditions: vec![
                c('x', Bound::Lower, rect.x1),
                c('x', Bound::Upper, rect.x2),
                c('y', Bound::Lower, rect.y1),
                c('y', Bound::Upper, rect.y2),
            ],
            attributes,
        }
    }

    pub fn holds(&self, p: Point) -> bool {
        self.conditions.iter().all(|c| {
            let v = if c.axis == 'x' { p.x } else { p.y };
            match c.bound {
                Bound::Lower => c.threshold <= v,
                Bound::Upper => v <= c.threshold,
            }
        })
    }

    pub fn render(&self) -> String {
        let lo = |axis| {
            self.conditions
                .iter()
                .find(|c| c.axis == axis && c.bound == Bound::Lower)
        };
        let hi = |axis| {
            self.conditions
                .iter()
                .find(|c| c.axis == axis && c.bound == Bound::Upper)
        };
        let mut parts = Vec::new();
        for axis in ['x', 'y'] {
            match (lo(axis), hi(axis)) {
                (Some(a), Some(b)) if a.threshold == b.threshold => {
                    parts.push(format!("{axis} = {}", a.threshold))
                }
                (a, b) => {
                    if let Some(a) = a {
                        parts.push(format!("{} ≤ {axis}", a.threshold));
                    }
                    if let Some(b) = b {
                        parts.push(format!("{axis} ≤ {}", b.threshold));
                    }
                }
            }
        }
        format!("B{}: {}", self.box_id, parts.join(" & "))
    }
}

/// One condition chain per positive box of `rule`. Only static layouts have
/// box coordinates that are single attributes.
pub fn boxes_to_tree_form(ruleset: &RuleSet, rule: &Rule) -> Result<Vec<TreeChain>> {
    let spec = &ruleset.projection;
    if spec.mode.is_dynamic() {
        return Err(Error::TreeForm(format!(
            "{:?} box coordinates are sums over several attributes",
            spec.mode
        )));
    }
    let mut ids = rule.positive.clone();
    let mut branch = rule.else_branch.as_deref();
    while let Some(r) = branch {
        ids.extend(&r.positive);
        branch = r.else_branch.as_deref();
    }
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|id| {
            let b = ruleset.get_box(id).ok_or(Error::UnknownRule(id))?;
            Ok(TreeChain::from_rect(
                id,
                &b.rect,
                static_attributes(spec, &b.rect),
            ))
        })
        .collect()
}

fn static_attributes(spec: &ProjectionSpec, rect: &Rect) -> Vec<(usize, usize)> {
    let offsets = &spec.coordinate_offsets;
    let next_offset = |i: usize| {
        offsets
            .iter()
            .copied()
            .filter(|&o| o > offsets[i])
            .fold(f64::INFINITY, f64::min)
    };
    match spec.mode {
        ProjectionMode::Ilc2Static => spec
            .assignment
            .pairing
            .iter()
            .filter(|&&(hs, _)| rect.x2 >= offsets[hs] && rect.x1 <= next_offset(hs))
            .map(|&(hs, vs)| (spec.assignment.horizontal[hs], spec.assignment.vertical[vs]))
            .collect(),
        _ => (0..spec.dimension)
            .filter(|&i| rect.x2 >= offsets[i] && rect.x1 <= next_offset(i))
            .map(|i| (i, i))
            .collect(),
    }
}

const PALETTE: [&str; 6] = [
    "#2a9d3a", "#d03030", "#3060d0", "#c08020", "#8040b0", "#208080",
];

/// Minimal SVG plot of training polylines, boxes and highlighted polylines.
pub fn render_svg(
    background: &[Polyline2D],
    boxes: &[Rect],
    highlight: &[(&str, &Polyline2D)],
    width: f64,
    height: f64,
) -> String {
    let all = background
        .iter()
        .chain(highlight.iter().map(|h| h.1))
        .flat_map(|p| p.nodes.iter().copied())
        .chain(
            boxes
                .iter()
                .flat_map(|r| [Point::new(r.x1, r.y1), Point::new(r.x2, r.y2)]),
        );
    let (mut lo, mut hi) = (
        Point::new(f64::INFINITY, f64::INFINITY),
        Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in all {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.x.is_finite() {
        lo = Point::new(0.0, 0.0);
        hi = Point::new(1.0, 1.0);
    }
    let pad = 10.0;
    let sx = (width - 2.0 * pad) / (hi.x - lo.x).max(1e-9);
    let sy = (height - 2.0 * pad) / (hi.y - lo.y).max(1e-9);
    let tx = |x: f64| pad + (x - lo.x) * sx;
    let ty = |y: f64| height - pad - (y - lo.y) * sy;
    let path = |p: &Polyline2D| {
        p.nodes
            .iter()
            .map(|n| format!("{:.2},{:.2}", tx(n.x), ty(n.y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for p in background {
        let color = p
            .label()
            .map(|l| PALETTE[l % PALETTE.len()])
            .unwrap_or("#888888");
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-opacity="0.25" stroke-width="0.8"/>"#,
            path(p)
        );
    }
    for r in boxes {
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            tx(r.x1),
            ty(r.y2),
            (r.x2 - r.x1) * sx,
            (r.y2 - r.y1) * sy
        );
    }
    for (name, p) in highlight {
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"><title>{name}</title></polyline>"#,
            path(p)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// SVG of an explanation over its training data.
pub fn explanation_svg(explanation: &Explanation, training: &[Polyline2D]) -> String {
    let mut hl: Vec<(&str, &Polyline2D)> = vec![("c", &explanation.plot.point)];
    if let Some((a, b)) = &explanation.plot.training {
        hl.push(("a", a));
        hl.push(("b", b));
    }
    if let Some((d, e)) = &explanation.plot.artificial {
        hl.push(("d", d));
        hl.push(("e", e));
    }
    let boxes: Vec<Rect> = explanation.boxes.iter().take(1).map(|b| b.rect).collect();
    render_svg(training, &boxes, &hl, 800.0, 600.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_csv, CsvSchema, MissingPolicy};
    use crate::projection::AxisAssignment;

    fn lattice() -> Dataset {
        let mut text = String::new();
        for i in 0..8 {
            for j in 0..8 {
                let _ = writeln!(text, "{i},{j},{}", (i + j) % 2);
            }
        }
        parse_csv(
            "lattice",
            &text,
            &CsvSchema::default(),
            MissingPolicy::Error,
        )
        .unwrap()
    }

    fn static2() -> ProjectionSpec {
        let asg = AxisAssignment::zip(vec![0], vec![1]).unwrap();
        ProjectionSpec::new(ProjectionMode::Ilc2Static, 2, asg).unwrap()
    }

    #[test]
    fn checkerboard_gives_no_box() {
        let ds = lattice();
        let f = FnPredictor(|_: &[f64]| Some(0));
        let mut req = ExplanationRequest::new(vec![3.0, 3.0], 1.0, 4.0, 1.0);
        req.floor = Some(1.0);
        let e = explain_local(&req, &f, &ds, &static2()).unwrap();
        assert_eq!(e.verdict, Verdict::NoBoxFound);
        assert!(e.boxes.is_empty());
        assert!(e.sandwich_artificial.is_none());
    }

    #[test]
    fn pure_region_is_explained() {
        let mut text = String::new();
        for i in 0..6 {
            for j in 0..6 {
                let _ = writeln!(text, "{i},{j},{}", if i < 3 { "a" } else { "b" });
            }
        }
        let ds = parse_csv("halves", &text, &CsvSchema::default(), MissingPolicy::Error).unwrap();
        let f = FnPredictor(|v: &[f64]| Some(if v[0] < 2.5 { 0 } else { 1 }));
        let req = ExplanationRequest::new(vec![0.5, 3.5], 1.0, 2.0, 0.5);
        let e = explain_local(&req, &f, &ds, &static2()).unwrap();
        assert_eq!(e.verdict, Verdict::Explained);
        let b = &e.boxes[0];
        assert_eq!(b.class, 0);
        assert_eq!(b.purity, 1.0);
        let art = e.sandwich_artificial.unwrap();
        assert!(leq(&art.lower, &req.point) && leq(&req.point, &art.upper));
        let t = e.sandwich_training.unwrap();
        assert!(leq(&t.lower, &req.point) && leq(&req.point, &t.upper));
    }

    #[test]
    fn chain_for_table_box() {
        let rect = Rect::new(15.0, 20.5, 1.0, 1.5).unwrap();
        let chain = TreeChain::from_rect(1, &rect, vec![]);
        assert_eq!(chain.render(), "B1: 15 ≤ x & x ≤ 20.5 & 1 ≤ y & y ≤ 1.5");
        assert!(chain.holds(Point::new(15.0, 1.5)));
        assert!(!chain.holds(Point::new(14.9, 1.2)));
        let flat = TreeChain::from_rect(2, &Rect::new(3.0, 3.0, 0.0, 1.0).unwrap(), vec![]);
        assert_eq!(flat.render(), "B2: x = 3 & 0 ≤ y & y ≤ 1");
    }

    #[test]
    fn svg_is_well_formed() {
        let p = project_values(&[1.0, 2.0], &static2()).unwrap();
        let s = render_svg(
            std::slice::from_ref(&p),
            &[Rect::new(0.0, 1.0, 0.0, 1.0).unwrap()],
            &[("c", &p)],
            100.0,
            80.0,
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
