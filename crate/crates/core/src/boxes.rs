//! Axis-aligned boxes in projection space, grid search for pure boxes and
//! ordered interval rules built from them.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::projection::{Point, Polyline2D, ProjectionSpec};

pub const RULE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, x2: f64, y1: f64, y2: f64) -> Result<Self> {
        let r = Rect { x1, x2, y1, y2 };
        r.check()?;
        Ok(r)
    }

    /// Like [`Rect::new`] but swaps reversed bounds instead of failing.
    pub fn normalized(x1: f64, x2: f64, y1: f64, y2: f64) -> Self {
        Rect {
            x1: x1.min(x2),
            x2: x1.max(x2),
            y1: y1.min(y2),
            y2: y1.max(y2),
        }
    }

    pub fn check(&self) -> Result<()> {
        let finite = [self.x1, self.x2, self.y1, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x1 > self.x2 || self.y1 > self.y2 {
            return Err(Error::InvalidBox(format!(
                "({}, {}, {}, {}) needs finite x1 <= x2 and y1 <= y2",
                self.x1, self.x2, self.y1, self.y2
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        self.x1 <= p.x && p.x <= self.x2 && self.y1 <= p.y && p.y <= self.y2
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn bounding(&self, other: &Rect) -> Rect {
        Rect {
            x1: self.x1.min(other.x1),
            x2: self.x2.max(other.x2),
            y1: self.y1.min(other.y1),
            y2: self.y2.max(other.y2),
        }
    }

    /// True when the two rectangles together fill their bounding rectangle.
    pub fn union_is_rect(&self, other: &Rect) -> bool {
        let same_x = self.x1 == other.x1 && self.x2 == other.x2;
        let same_y = self.y1 == other.y1 && self.y2 == other.y2;
        let touch_y = self.y2 >= other.y1 && other.y2 >= self.y1;
        let touch_x = self.x2 >= other.x1 && other.x2 >= self.x1;
        let inside =
            |a: &Rect, b: &Rect| a.x1 >= b.x1 && a.x2 <= b.x2 && a.y1 >= b.y1 && a.y2 <= b.y2;
        (same_x && touch_y) || (same_y && touch_x) || inside(self, other) || inside(other, self)
    }

    /// Closed segment vs closed rectangle (Liang-Barsky clipping).
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        if self.contains(a) || self.contains(b) {
            return true;
        }
        let dx = b.x - a.x;
        let dy = b.y - a.y;
        let mut t0: f64 = 0.0;
        let mut t1: f64 = 1.0;
        for (p, q) in [
            (-dx, a.x - self.x1),
            (dx, self.x2 - a.x),
            (-dy, a.y - self.y1),
            (dy, self.y2 - a.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    pub fn lex_cmp(&self, other: &Rect) -> Ordering {
        self.x1
            .total_cmp(&other.x1)
            .then(self.x2.total_cmp(&other.x2))
            .then(self.y1.total_cmp(&other.y1))
            .then(self.y2.total_cmp(&other.y2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    #[default]
    NodeIn,
    EdgeCross,
}

impl Membership {
    pub fn test(self, polyline: &Polyline2D, rect: &Rect) -> bool {
        match self {
            Membership::NodeIn => polyline.nodes.iter().any(|p| rect.contains(*p)),
            Membership::EdgeCross => {
                polyline.nodes.iter().any(|p| rect.contains(*p))
                    || polyline
                        .nodes
                        .windows(2)
                        .any(|w| rect.intersects_segment(w[0], w[1]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlcBox {
    /// 1-based; the box is `RuleSet::boxes[id - 1]`.
    pub id: usize,
    #[serde(flatten)]
    pub rect: Rect,
    /// Per-class occupancy over the training projection.
    pub counts: Vec<usize>,
    pub membership_mode: Membership,
}

impl IlcBox {
    pub fn name(&self) -> String {
        format!("B{}", self.id)
    }
}

pub fn membership(polyline: &Polyline2D, b: &IlcBox) -> bool {
    b.membership_mode.test(polyline, &b.rect)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub counts: Vec<usize>,
    pub total: usize,
    /// `None` for an empty box.
    pub dominant: Option<ClassId>,
    /// Dominant share of occupants in [0, 1]; `None` when empty.
    pub purity_fraction: Option<f64>,
    /// Dominant count over all other counts; infinite when the box is pure.
    pub purity_ratio: Option<f64>,
}

impl BoxStats {
    pub fn from_counts(counts: Vec<usize>) -> Self {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return BoxStats {
                counts,
                total,
                dominant: None,
                purity_fraction: None,
                purity_ratio: None,
            };
        }
        let mut dom = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[dom] {
                dom = c;
            }
        }
        let d = counts[dom];
        let others = total - d;
        BoxStats {
            counts,
            total,
            dominant: Some(dom),
            purity_fraction: Some(d as f64 / total as f64),
            purity_ratio: Some(if others == 0 {
                f64::INFINITY
            } else {
                d as f64 / others as f64
            }),
        }
    }
}

/// Counts labeled polylines that are members of `rect`.
pub fn box_stats(
    rect: &Rect,
    mode: Membership,
    polylines: &[Polyline2D],
    n_classes: usize,
) -> BoxStats {
    box_stats_subset(rect, mode, polylines, n_classes, None)
}

pub fn box_stats_subset(
    rect: &Rect,
    mode: Membership,
    polylines: &[Polyline2D],
    n_classes: usize,
    subset: Option<&[usize]>,
) -> BoxStats {
    let mut counts = vec![0; n_classes];
    let mut visit = |p: &Polyline2D| {
        if let Some(l) = p.label() {
            if l < n_classes && mode.test(p, rect) {
                counts[l] += 1;
            }
        }
    };
    match subset {
        Some(idx) => idx.iter().for_each(|&i| visit(&polylines[i])),
        None => polylines.iter().for_each(visit),
    }
    BoxStats::from_counts(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageBasis {
    /// Fraction of all remaining cases.
    #[default]
    Remaining,
    /// Fraction of the remaining cases of the box's dominant class.
    RemainingOfClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub cell_width: f64,
    pub cell_height: f64,
    pub max_span_w: usize,
    pub max_span_h: usize,
    pub coverage_fraction: f64,
    pub purity_threshold: f64,
    #[serde(default)]
    pub coverage_basis: CoverageBasis,
    #[serde(default)]
    pub membership: Membership,
    /// Grid origin; defaults to the bounding rectangle's corner snapped down
    /// to a multiple of the cell size.
    #[serde(default)]
    pub origin: Option<Point>,
    /// Candidates kept per class.
    pub top_k: usize,
}

impl GridParams {
    pub fn new(cell: f64) -> Self {
        GridParams {
            cell_width: cell,
            cell_height: cell,
            max_span_w: usize::MAX,
            max_span_h: usize::MAX,
            coverage_fraction: 0.1,
            purity_threshold: 1.0,
            coverage_basis: CoverageBasis::Remaining,
            membership: Membership::NodeIn,
            origin: None,
            top_k: 10,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.cell_width > 0.0 && self.cell_height > 0.0) {
            return Err(Error::Grid("cell sizes must be positive".into()));
        }
        if self.max_span_w == 0 || self.max_span_h == 0 {
            return Err(Error::Grid("spans must be at least one cell".into()));
        }
        if !(self.coverage_fraction >= 0.0 && self.coverage_fraction <= 1.0) {
            return Err(Error::Grid("coverage_fraction must lie in [0, 1]".into()));
        }
        if !(self.purity_threshold > 0.0 && self.purity_threshold <= 1.0) {
            return Err(Error::Grid("purity_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Regular grid laid over the projection area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub cell_width: f64,
    pub cell_height: f64,
    pub cols: usize,
    pub rows: usize,
}

impl Grid {
    /// Covers every node of `polylines`.
    pub fn covering(polylines: &[Polyline2D], params: &GridParams) -> Result<Grid> {
        params.check()?;
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in polylines.iter().flat_map(|p| &p.nodes) {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        if !lo.x.is_finite() {
            return Err(Error::Grid("no nodes to cover".into()));
        }
        let origin = params.origin.unwrap_or_else(|| {
            Point::new(
                (lo.x / params.cell_width).floor() * params.cell_width,
                (lo.y / params.cell_height).floor() * params.cell_height,
            )
        });
        let cols = ((hi.x - origin.x) / params.cell_width).floor() + 1.0;
        let rows = ((hi.y - origin.y) / params.cell_height).floor() + 1.0;
        if !(cols >= 1.0 && rows >= 1.0) {
            return Err(Error::Grid("grid produces zero cells".into()));
        }
        Ok(Grid {
            origin,
            cell_width: params.cell_width,
            cell_height: params.cell_height,
            cols: cols as usize,
            rows: rows as usize,
        })
    }

    pub fn x_edge(&self, i: usize) -> f64 {
        self.origin.x + i as f64 * self.cell_width
    }

    pub fn y_edge(&self, j: usize) -> f64 {
        self.origin.y + j as f64 * self.cell_height
    }

    /// Rectangle spanning `w x h` cells from anchor `(i, j)`.
    pub fn rect(&self, i: usize, j: usize, w: usize, h: usize) -> Rect {
        Rect {
            x1: self.x_edge(i),
            x2: self.x_edge(i + w),
            y1: self.y_edge(j),
            y2: self.y_edge(j + h),
        }
    }

    /// Column (or row) indices whose closed extent contains `v`.
    fn closed_range(
        v: f64,
        origin: f64,
        cell: f64,
        n: usize,
        edge: impl Fn(usize) -> f64,
    ) -> (usize, usize) {
        let t = ((v - origin) / cell).floor();
        let guess = if t.is_finite() && t > 0.0 {
            t as usize
        } else {
            0
        };
        let lo = guess.saturating_sub(1);
        let hi = (guess + 1).min(n.saturating_sub(1));
        let mut first = usize::MAX;
        let mut last = 0;
        for i in lo..=hi {
            if i < n && edge(i) <= v && v <= edge(i + 1) {
                first = first.min(i);
                last = i;
            }
        }
        (first, last)
    }

    fn cells_of_point(&self, p: Point) -> Option<(usize, usize, usize, usize)> {
        let (c0, c1) = Grid::closed_range(p.x, self.origin.x, self.cell_width, self.cols, |i| {
            self.x_edge(i)
        });
        let (r0, r1) = Grid::closed_range(p.y, self.origin.y, self.cell_height, self.rows, |j| {
            self.y_edge(j)
        });
        if c0 == usize::MAX || r0 == usize::MAX {
            None
        } else {
            Some((c0, c1, r0, r1))
        }
    }
}

#[derive(Clone)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn or(&mut self, other: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
    fn clear(&mut self) {
        self.0.iter_mut().for_each(|w| *w = 0);
    }
    fn and_count(&self, mask: &Bits) -> usize {
        self.0
            .iter()
            .zip(&mask.0)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }
}

/// A ranked grid-search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rect: Rect,
    pub class: ClassId,
    /// Counts over the remaining cases.
    pub counts: Vec<usize>,
    pub purity: f64,
    pub coverage: usize,
}

impl Candidate {
    pub fn area(&self) -> f64 {
        self.rect.area()
    }

    /// Ranking order: purity desc, coverage desc, area asc, corners asc.
    pub fn rank_cmp(&self, other: &Candidate) -> Ordering {
        other
            .purity
            .total_cmp(&self.purity)
            .then(other.coverage.cmp(&self.coverage))
            .then(self.area().total_cmp(&other.area()))
            .then(self.rect.lex_cmp(&other.rect))
            .then(self.class.cmp(&other.class))
    }
}

/// Polylines with labels, shared by every search routine.
pub struct SearchContext<'a> {
    pub polylines: &'a [Polyline2D],
    pub labels: Vec<ClassId>,
    pub n_classes: usize,
}

impl<'a> SearchContext<'a> {
    pub fn new(polylines: &'a [Polyline2D], n_classes: usize) -> Self {
        let labels = polylines.iter().map(|p| p.label().unwrap_or(0)).collect();
        SearchContext {
            polylines,
            labels,
            n_classes,
        }
    }

    /// Counts of the cases among `subset` that are members of `rect`.
    pub fn stats(&self, rect: &Rect, mode: Membership, subset: &[usize]) -> BoxStats {
        box_stats_subset(rect, mode, self.polylines, self.n_classes, Some(subset))
    }

    /// Turns stats into a candidate if they pass the thresholds.
    pub fn qualify(
        &self,
        rect: Rect,
        stats: &BoxStats,
        remaining_per_class: &[usize],
        params: &GridParams,
    ) -> Option<Candidate> {
        let class = stats.dominant?;
        let purity = stats.purity_fraction?;
        if purity < params.purity_threshold {
            return None;
        }
        let basis = match params.coverage_basis {
            CoverageBasis::Remaining => remaining_per_class.iter().sum::<usize>(),
            CoverageBasis::RemainingOfClass => remaining_per_class[class],
        };
        if (stats.total as f64) < params.coverage_fraction * basis as f64 {
            return None;
        }
        Some(Candidate {
            rect,
            class,
            counts: stats.counts.clone(),
            purity,
            coverage: stats.total,
        })
    }

    pub fn per_class(&self, subset: &[usize]) -> Vec<usize> {
        let mut out = vec![0; self.n_classes];
        for &i in subset {
            out[self.labels[i]] += 1;
        }
        out
    }
}

fn insert_ranked(list: &mut Vec<Candidate>, c: Candidate, k: usize) {
    if list.len() >= k {
        if let Some(last) = list.last() {
            if c.rank_cmp(last) != Ordering::Less {
                return;
            }
        }
    }
    let pos = list.partition_point(|x| x.rank_cmp(&c) == Ordering::Less);
    list.insert(pos, c);
    list.truncate(k);
}

fn merge_ranked(
    mut a: Vec<Vec<Candidate>>,
    b: Vec<Vec<Candidate>>,
    k: usize,
) -> Vec<Vec<Candidate>> {
    for (la, lb) in a.iter_mut().zip(b) {
        for c in lb {
            insert_ranked(la, c, k);
        }
    }
    a
}

/// Ranked candidates per class (index = class id) over `remaining`.
pub fn grid_search(
    ctx: &SearchContext,
    params: &GridParams,
    remaining: &[usize],
) -> Result<Vec<Vec<Candidate>>> {
    if remaining.is_empty() {
        return Err(Error::Grid("no remaining cases".into()));
    }
    let grid = Grid::covering(ctx.polylines, params)?;
    grid_search_on(ctx, params, &grid, remaining)
}

pub fn grid_search_on(
    ctx: &SearchContext,
    params: &GridParams,
    grid: &Grid,
    remaining: &[usize],
) -> Result<Vec<Vec<Candidate>>> {
    params.check()?;
    let n = remaining.len();
    let mut cells = vec![Bits::new(n); grid.cols * grid.rows];
    let cell_at = |i: usize, j: usize| j * grid.cols + i;
    for (pos, &ci) in remaining.iter().enumerate() {
        let poly = &ctx.polylines[ci];
        let mark = |cells: &mut Vec<Bits>, c0: usize, c1: usize, r0: usize, r1: usize| {
            for j in r0..=r1 {
                for i in c0..=c1 {
                    cells[cell_at(i, j)].set(pos);
                }
            }
        };
        for p in &poly.nodes {
            if let Some((c0, c1, r0, r1)) = grid.cells_of_point(*p) {
                mark(&mut cells, c0, c1, r0, r1);
            }
        }
        if params.membership == Membership::EdgeCross {
            for w in poly.nodes.windows(2) {
                let bx = Rect::normalized(w[0].x, w[1].x, w[0].y, w[1].y);
                let lo = grid.cells_of_point(Point::new(bx.x1, bx.y1));
                let hi = grid.cells_of_point(Point::new(bx.x2, bx.y2));
                let (c0, r0) = lo.map(|c| (c.0, c.2)).unwrap_or((0, 0));
                let (c1, r1) = hi
                    .map(|c| (c.1, c.3))
                    .unwrap_or((grid.cols - 1, grid.rows - 1));
                for j in r0..=r1 {
                    for i in c0..=c1 {
                        let r = grid.rect(i, j, 1, 1);
                        if r.intersects_segment(w[0], w[1]) {
                            cells[cell_at(i, j)].set(pos);
                        }
                    }
                }
            }
        }
    }

    let mut masks = vec![Bits::new(n); ctx.n_classes];
    for (pos, &ci) in remaining.iter().enumerate() {
        masks[ctx.labels[ci]].set(pos);
    }
    let per_class = ctx.per_class(remaining);
    let max_w = params.max_span_w.min(grid.cols);
    let max_h = params.max_span_h.min(grid.rows);
    let k = params.top_k.max(1);

    let anchors: Vec<(usize, usize)> = (0..grid.rows)
        .flat_map(|j| (0..grid.cols).map(move |i| (i, j)))
        .collect();
    let ranked = anchors
        .par_iter()
        .fold(
            || vec![Vec::new(); ctx.n_classes],
            |mut acc: Vec<Vec<Candidate>>, &(i0, j0)| {
                let wmax = max_w.min(grid.cols - i0);
                let hmax = max_h.min(grid.rows - j0);
                let mut strips = vec![Bits::new(n); wmax];
                let mut union = Bits::new(n);
                for h in 1..=hmax {
                    for (w, strip) in strips.iter_mut().enumerate() {
                        strip.or(&cells[cell_at(i0 + w, j0 + h - 1)]);
                    }
                    union.clear();
                    for w in 1..=wmax {
                        union.or(&strips[w - 1]);
                        let counts: Vec<usize> = masks.iter().map(|m| union.and_count(m)).collect();
                        if counts.iter().all(|c| *c == 0) {
                            continue;
                        }
                        let stats = BoxStats::from_counts(counts);
                        if let Some(c) =
                            ctx.qualify(grid.rect(i0, j0, w, h), &stats, &per_class, params)
                        {
                            let class = c.class;
                            insert_ranked(&mut acc[class], c, k);
                        }
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![Vec::new(); ctx.n_classes],
            |a, b| merge_ranked(a, b, k),
        );
    Ok(ranked)
}

/// Best candidate over all classes.
pub fn best_of(ranked: &[Vec<Candidate>]) -> Option<Candidate> {
    ranked
        .iter()
        .filter_map(|l| l.first())
        .min_by(|a, b| a.rank_cmp(b))
        .cloned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Class(ClassId),
    Refuse,
}

impl Decision {
    pub fn class(self) -> Option<ClassId> {
        match self {
            Decision::Class(c) => Some(c),
            Decision::Refuse => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusePolicy {
    #[default]
    Refuse,
    FallbackClass(ClassId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    /// Box ids forming the positive union.
    pub positive: Vec<usize>,
    /// Box ids whose union the case must avoid.
    pub negative: Vec<usize>,
    pub predicted: Decision,
    /// Applies to cases outside `positive` that match the nested rule.
    pub else_branch: Option<Box<Rule>>,
    /// Cases fired at this rule's position in the ordered set.
    pub covered_count: usize,
    pub order: usize,
}

impl Rule {
    /// Box ids referenced anywhere in this rule, including else-branches.
    pub fn all_boxes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .positive
            .iter()
            .chain(&self.negative)
            .copied()
            .collect();
        if let Some(e) = &self.else_branch {
            out.extend(e.all_boxes());
        }
        out
    }

    pub fn predicted_class(&self) -> Option<ClassId> {
        self.predicted.class()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub format_version: u32,
    pub projection: ProjectionSpec,
    pub class_names: Vec<String>,
    pub boxes: Vec<IlcBox>,
    pub rules: Vec<Rule>,
    pub refuse_policy: RefusePolicy,
}

impl RuleSet {
    pub fn empty(projection: ProjectionSpec, class_names: Vec<String>) -> Self {
        RuleSet {
            format_version: RULE_FORMAT_VERSION,
            projection,
            class_names,
            boxes: Vec::new(),
            rules: Vec::new(),
            refuse_policy: RefusePolicy::Refuse,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get_box(&self, id: usize) -> Option<&IlcBox> {
        id.checked_sub(1).and_then(|i| self.boxes.get(i))
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rules {
            for id in r.all_boxes() {
                if self.get_box(id).is_none() {
                    return Err(Error::InvalidBox(format!(
                        "rule {} references missing box {id}",
                        r.name
                    )));
                }
            }
            if r.positive.is_empty() {
                return Err(Error::InvalidBox(format!(
                    "rule {} has no positive boxes",
                    r.name
                )));
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.id != i + 1 {
                return Err(Error::InvalidBox(format!(
                    "box at position {i} has id {}",
                    b.id
                )));
            }
            b.rect.check()?;
        }
        Ok(())
    }

    fn in_any(&self, ids: &[usize], p: &Polyline2D) -> bool {
        ids.iter()
            .any(|&id| self.get_box(id).is_some_and(|b| membership(p, b)))
    }

    fn rule_fires(&self, rule: &Rule, p: &Polyline2D) -> Option<Decision> {
        if self.in_any(&rule.positive, p) {
            if !self.in_any(&rule.negative, p) {
                return Some(rule.predicted);
            }
            return None;
        }
        rule.else_branch
            .as_deref()
            .and_then(|e| self.rule_fires(e, p))
    }

    /// Index of the top-level rule that fires, with its decision.
    pub fn firing_rule(&self, p: &Polyline2D) -> Option<(usize, Decision)> {
        self.rules
            .iter()
            .enumerate()
            .find_map(|(i, r)| self.rule_fires(r, p).map(|d| (i, d)))
    }

    /// Like [`RuleSet::firing_rule`] but also reports whether the decision
    /// came from an else-branch (`depth > 0`).
    pub fn firing_path(&self, p: &Polyline2D) -> Option<(usize, usize, Decision)> {
        for (i, r) in self.rules.iter().enumerate() {
            let mut rule = r;
            let mut depth = 0;
            loop {
                if self.in_any(&rule.positive, p) {
                    if !self.in_any(&rule.negative, p) {
                        return Some((i, depth, rule.predicted));
                    }
                    break;
                }
                match rule.else_branch.as_deref() {
                    Some(e) => {
                        rule = e;
                        depth += 1;
                    }
                    None => break,
                }
            }
        }
        None
    }

    pub fn classify_polyline(&self, p: &Polyline2D) -> Decision {
        match self.firing_rule(p) {
            Some((_, d)) => d,
            None => match self.refuse_policy {
                RefusePolicy::Refuse => Decision::Refuse,
                RefusePolicy::FallbackClass(c) => Decision::Class(c),
            },
        }
    }

    pub fn classify(&self, values: &[f64]) -> Result<Decision> {
        let p = crate::projection::project_values(values, &self.projection)?;
        Ok(self.classify_polyline(&p))
    }

    /// Recomputes `covered_count` and `order` from ordered firing on `polylines`.
    pub fn recount(&mut self, polylines: &[Polyline2D]) {
        let mut counts = vec![0; self.rules.len()];
        for p in polylines {
            if let Some((i, _)) = self.firing_rule(p) {
                counts[i] += 1;
            }
        }
        for (i, (r, c)) in self.rules.iter_mut().zip(counts).enumerate() {
            r.covered_count = c;
            r.order = i;
        }
    }

    /// Recomputes every box's per-class counts over `polylines`.
    pub fn recount_boxes(&mut self, polylines: &[Polyline2D]) {
        let n = self.n_classes();
        for b in &mut self.boxes {
            b.counts = box_stats(&b.rect, b.membership_mode, polylines, n).counts;
        }
    }

    pub fn add_box(&mut self, rect: Rect, mode: Membership, polylines: &[Polyline2D]) -> usize {
        let id = self.boxes.len() + 1;
        let counts = box_stats(&rect, mode, polylines, self.n_classes()).counts;
        self.boxes.push(IlcBox {
            id,
            rect,
            counts,
            membership_mode: mode,
        });
        id
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<RuleSet> {
        let rs: RuleSet = serde_json::from_str(text)?;
        rs.validate()?;
        Ok(rs)
    }

    fn class_label(&self, d: Decision) -> String {
        match d {
            Decision::Class(c) => self
                .class_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| format!("C{c}")),
            Decision::Refuse => "REFUSE".to_string(),
        }
    }

    fn render_rule(&self, r: &Rule) -> String {
        let union = |ids: &[usize]| {
            ids.iter()
                .map(|i| format!("B{i}"))
                .collect::<Vec<_>>()
                .join(" ∪ ")
        };
        let mut s = format!("x ∈ {}", union(&r.positive));
        if !r.negative.is_empty() {
            let _ = write!(s, " & x ∉ {}", union(&r.negative));
        }
        let _ = write!(s, " ⇒ x ∈ {}", self.class_label(r.predicted));
        if let Some(e) = &r.else_branch {
            let _ = write!(s, " (else {})", self.render_rule(e));
        }
        s
    }

    /// One line per rule in interval notation.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            let _ = writeln!(
                out,
                "{}: {} ({} cases)",
                r.name,
                self.render_rule(r),
                r.covered_count
            );
        }
        out
    }

    /// Box table, one line per box.
    pub fn render_boxes(&self) -> String {
        let mut out = String::new();
        for b in &self.boxes {
            let counts = b
                .counts
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("/");
            let _ = writeln!(
                out,
                "{}: {}, {}, {}, {} [{}]",
                b.name(),
                b.rect.x1,
                b.rect.x2,
                b.rect.y1,
                b.rect.y2,
                counts
            );
        }
        out
    }
}

/// Incremental construction of an ordered rule set over a training projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBuilder {
    pub ruleset: RuleSet,
    pub remaining: Vec<usize>,
    pub membership: Membership,
}

impl RuleBuilder {
    pub fn new(ruleset: RuleSet, n_cases: usize, membership: Membership) -> Self {
        RuleBuilder {
            ruleset,
            remaining: (0..n_cases).collect(),
            membership,
        }
    }

    /// Adds a rule for `rect` predicting `class` (default: dominant remaining
    /// class). Negations are the earlier boxes of other-class rules that share
    /// a training case with the new box. Members are removed from `remaining`.
    pub fn accept(
        &mut self,
        rect: Rect,
        class: Option<ClassId>,
        polylines: &[Polyline2D],
    ) -> Result<&Rule> {
        rect.check()?;
        let n = self.ruleset.n_classes();
        let members: Vec<usize> = self
            .remaining
            .iter()
            .copied()
            .filter(|&i| self.membership.test(&polylines[i], &rect))
            .collect();
        let class = match class {
            Some(c) if c < n => c,
            Some(c) => return Err(Error::InvalidBox(format!("class {c} out of range"))),
            None => {
                let mut counts = vec![0; n];
                for &i in &members {
                    if let Some(l) = polylines[i].label() {
                        counts[l] += 1;
                    }
                }
                BoxStats::from_counts(counts)
                    .dominant
                    .ok_or_else(|| Error::InvalidBox("box covers no remaining case".into()))?
            }
        };
        let all_members: Vec<usize> = (0..polylines.len())
            .filter(|&i| self.membership.test(&polylines[i], &rect))
            .collect();
        let mut negative = Vec::new();
        for rule in &self.ruleset.rules {
            if rule.predicted == Decision::Class(class) || rule.predicted == Decision::Refuse {
                continue;
            }
            for &id in &rule.positive {
                let b = &self.ruleset.boxes[id - 1];
                let shares = all_members.iter().any(|&i| membership(&polylines[i], b));
                if shares && !negative.contains(&id) {
                    negative.push(id);
                }
            }
        }
        negative.sort_unstable();
        let id = self.ruleset.add_box(rect, self.membership, polylines);
        let order = self.ruleset.rules.len();
        self.remaining.retain(|i| !members.contains(i));
        self.ruleset.rules.push(Rule {
            name: format!("R{}", order + 1),
            positive: vec![id],
            negative,
            predicted: Decision::Class(class),
            else_branch: None,
            covered_count: members.len(),
            order,
        });
        Ok(self.ruleset.rules.last().expect("just pushed"))
    }

    pub fn is_complete(&self) -> bool {
        self.remaining.is_empty()
    }
}

/// Supplies the next box for [`bc_fit`].
pub trait CandidateSource {
    fn next(
        &mut self,
        ctx: &SearchContext,
        remaining: &[usize],
    ) -> Result<Option<(Rect, Option<ClassId>)>>;
}

/// Exhaustive grid search over the remaining cases.
pub struct GridSource(pub GridParams);

impl CandidateSource for GridSource {
    fn next(
        &mut self,
        ctx: &SearchContext,
        remaining: &[usize],
    ) -> Result<Option<(Rect, Option<ClassId>)>> {
        let ranked = grid_search(ctx, &self.0, remaining)?;
        Ok(best_of(&ranked).map(|c| (c.rect, Some(c.class))))
    }
}

/// Fixed stream of boxes consumed in order.
pub struct InjectedSource {
    pub boxes: Vec<(Rect, Option<ClassId>)>,
    pub next_index: usize,
}

impl InjectedSource {
    pub fn new(boxes: Vec<(Rect, Option<ClassId>)>) -> Self {
        InjectedSource {
            boxes,
            next_index: 0,
        }
    }
}

impl CandidateSource for InjectedSource {
    fn next(
        &mut self,
        _ctx: &SearchContext,
        _remaining: &[usize],
    ) -> Result<Option<(Rect, Option<ClassId>)>> {
        let out = self.boxes.get(self.next_index).copied();
        self.next_index += 1;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopConfig {
    pub max_rules: usize,
    /// Stop once this many cases or fewer remain.
    pub min_remaining: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            max_rules: 200,
            min_remaining: 0,
        }
    }
}

/// Sequential box classification: take the best box, emit a rule, remove
/// its cases, repeat.
pub fn bc_fit(
    polylines: &[Polyline2D],
    spec: &ProjectionSpec,
    class_names: Vec<String>,
    source: &mut dyn CandidateSource,
    membership: Membership,
    stop: &StopConfig,
) -> Result<RuleSet> {
    let n_classes = class_names.len();
    let ctx = SearchContext::new(polylines, n_classes);
    let mut builder = RuleBuilder::new(
        RuleSet::empty(spec.clone(), class_names),
        polylines.len(),
        membership,
    );
    while builder.remaining.len() > stop.min_remaining
        && builder.ruleset.rules.len() < stop.max_rules
    {
        let Some((rect, class)) = source.next(&ctx, &builder.remaining)? else {
            break;
        };
        let before = builder.remaining.len();
        match builder.accept(rect, class, polylines) {
            Ok(_) => {}
            // An injected box may cover nothing that remains; skip it.
            Err(Error::InvalidBox(_)) => continue,
            Err(e) => return Err(e),
        }
        if builder.remaining.len() == before {
            builder.ruleset.rules.pop();
            builder.ruleset.boxes.pop();
        }
    }
    Ok(builder.ruleset)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PruneMode {
    /// Merge into `target` (a rule name's index) or the largest same-class rule.
    Associate {
        target: Option<usize>,
    },
    Refuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub rule: String,
    pub covered_count: usize,
    /// Rule the mini rule was merged into; `None` when refused.
    pub merged_into: Option<String>,
    /// Cases the merged rule gets wrong after the merge.
    pub merged_errors: Option<usize>,
    pub merged_correct: Option<usize>,
    /// Associate was requested but no larger same-class rule existed.
    pub fell_back_to_refuse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub events: Vec<PruneEvent>,
}

fn fired_stats(rs: &RuleSet, rule_idx: usize, polylines: &[Polyline2D]) -> (usize, usize) {
    let mut correct = 0;
    let mut wrong = 0;
    for p in polylines {
        if let Some((i, d)) = rs.firing_rule(p) {
            if i == rule_idx {
                if d.class() == p.label() {
                    correct += 1;
                } else {
                    wrong += 1;
                }
            }
        }
    }
    (correct, wrong)
}

/// Removes or merges rules covering fewer than `min_cases` cases.
pub fn prune(
    ruleset: &RuleSet,
    min_cases: usize,
    mode: PruneMode,
    polylines: &[Polyline2D],
) -> Result<(RuleSet, PruneReport)> {
    if min_cases == 0 {
        return Err(Error::Hierarchy("min_cases must be at least 1".into()));
    }
    let mut rs = ruleset.clone();
    let mut events = Vec::new();
    let mut i = 0;
    while i < rs.rules.len() {
        let rule = rs.rules[i].clone();
        if rule.covered_count >= min_cases || rule.predicted == Decision::Refuse {
            i += 1;
            continue;
        }
        let target = match mode {
            PruneMode::Refuse => None,
            PruneMode::Associate { target } => {
                let chosen = target
                    .filter(|&t| t != i && t < rs.rules.len())
                    .or_else(|| {
                        rs.rules
                            .iter()
                            .enumerate()
                            .filter(|(j, r)| {
                                *j != i
                                    && r.predicted == rule.predicted
                                    && r.covered_count >= min_cases
                            })
                            .max_by(|a, b| {
                                a.1.covered_count
                                    .cmp(&b.1.covered_count)
                                    .then(b.0.cmp(&a.0))
                            })
                            .map(|(j, _)| j)
                    });
                chosen
            }
        };
        match target {
            None => {
                rs.rules[i].predicted = Decision::Refuse;
                rs.rules[i].else_branch = None;
                events.push(PruneEvent {
                    rule: rule.name.clone(),
                    covered_count: rule.covered_count,
                    merged_into: None,
                    merged_errors: None,
                    merged_correct: None,
                    fell_back_to_refuse: matches!(mode, PruneMode::Associate { .. }),
                });
                i += 1;
            }
            Some(t) => {
                let single = rs.rules[t].positive.len() == 1 && rule.positive.len() == 1;
                let fused = if single {
                    let a = rs.boxes[rs.rules[t].positive[0] - 1].rect;
                    let b = rs.boxes[rule.positive[0] - 1].rect;
                    a.union_is_rect(&b).then(|| a.bounding(&b))
                } else {
                    None
                };
                match fused {
                    Some(r) => {
                        let mode = rs.boxes[rs.rules[t].positive[0] - 1].membership_mode;
                        let id = rs.add_box(r, mode, polylines);
                        rs.rules[t].positive = vec![id];
                    }
                    None => {
                        for &id in &rule.positive {
                            if !rs.rules[t].positive.contains(&id) {
                                rs.rules[t].positive.push(id);
                            }
                        }
                    }
                }
                let mut neg = rs.rules[t].negative.clone();
                for &id in &rule.negative {
                    if !neg.contains(&id) && !rs.rules[t].positive.contains(&id) {
                        neg.push(id);
                    }
                }
                neg.sort_unstable();
                rs.rules[t].negative = neg;
                rs.rules[t].name = format!("{}M", rs.rules[t].name.trim_end_matches('M'));
                let target_name = rs.rules[t].name.clone();
                rs.rules.remove(i);
                let t = if t > i { t - 1 } else { t };
                let (correct, wrong) = fired_stats(&rs, t, polylines);
                events.push(PruneEvent {
                    rule: rule.name.clone(),
                    covered_count: rule.covered_count,
                    merged_into: Some(target_name),
                    merged_errors: Some(wrong),
                    merged_correct: Some(correct),
                    fell_back_to_refuse: false,
                });
            }
        }
    }
    rs.recount(polylines);
    Ok((rs, PruneReport { events }))
}

fn same_decisions(a: &RuleSet, b: &RuleSet, polylines: &[Polyline2D]) -> bool {
    polylines
        .par_iter()
        .all(|p| a.classify_polyline(p) == b.classify_polyline(p))
}

fn merged_name(a: &str, b: &str) -> String {
    format!("{},{}", a, b.trim_start_matches('R'))
}

/// Losslessly merges same-class rules into unions and attaches opposite-class
/// rules as else-branches. Every merge is kept only if all training
/// decisions are unchanged.
pub fn join_rules(ruleset: &RuleSet, polylines: &[Polyline2D]) -> RuleSet {
    let mut rs = ruleset.clone();
    loop {
        let mut changed = false;
        'outer: for i in 0..rs.rules.len() {
            for j in i + 1..rs.rules.len() {
                let (a, b) = (&rs.rules[i], &rs.rules[j]);
                if a.predicted != b.predicted || a.predicted == Decision::Refuse {
                    continue;
                }
                if a.else_branch.is_some() || b.else_branch.is_some() || a.negative != b.negative {
                    continue;
                }
                let mut trial = rs.clone();
                let b = trial.rules.remove(j);
                let a = &mut trial.rules[i];
                for id in b.positive {
                    if !a.positive.contains(&id) {
                        a.positive.push(id);
                    }
                }
                a.name = merged_name(&a.name, &b.name);
                if same_decisions(&rs, &trial, polylines) {
                    rs = trial;
                    changed = true;
                    break 'outer;
                }
            }
        }
        if !changed {
            'outer2: for i in 0..rs.rules.len() {
                for j in i + 1..rs.rules.len() {
                    let (a, b) = (&rs.rules[i], &rs.rules[j]);
                    if a.predicted == b.predicted
                        || a.else_branch.is_some()
                        || b.else_branch.is_some()
                    {
                        continue;
                    }
                    if a.positive.len() < 2 || b.negative.is_empty() {
                        continue;
                    }
                    // Only rules whose negation is exactly covered by the parent's union.
                    if !b.negative.iter().all(|id| a.positive.contains(id)) {
                        continue;
                    }
                    let mut trial = rs.clone();
                    let mut b = trial.rules.remove(j);
                    b.negative.clear();
                    let a = &mut trial.rules[i];
                    a.name = merged_name(&a.name, &b.name);
                    a.else_branch = Some(Box::new(b));
                    if same_decisions(&rs, &trial, polylines) {
                        rs = trial;
                        changed = true;
                        break 'outer2;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    rs.recount(polylines);
    rs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{CaseRef, ProjectionMode};

    fn poly(points: &[(f64, f64)], label: ClassId) -> Polyline2D {
        Polyline2D {
            nodes: points.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            case_ref: Some(CaseRef {
                source_row: 0,
                label,
            }),
            node_provenance: vec![(0, 1); points.len()],
        }
    }

    fn spec2() -> ProjectionSpec {
        ProjectionSpec::new(
            ProjectionMode::Ilc2Static,
            2,
            crate::projection::AxisAssignment::consecutive(2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn edge_cross_vs_node_in() {
        let p = poly(&[(0.0, 0.0), (10.0, 10.0)], 0);
        let r = Rect::new(4.0, 6.0, 4.0, 6.0).unwrap();
        assert!(Membership::EdgeCross.test(&p, &r));
        assert!(!Membership::NodeIn.test(&p, &r));
        let left = Rect::new(20.0, 30.0, 0.0, 10.0).unwrap();
        assert!(!Membership::EdgeCross.test(&p, &left));
    }

    #[test]
    fn stats_purity_forms() {
        let s = BoxStats::from_counts(vec![90, 10]);
        assert_eq!(s.purity_fraction, Some(0.9));
        assert_eq!(s.purity_ratio, Some(9.0));
        let pure = BoxStats::from_counts(vec![382, 0]);
        assert_eq!(pure.purity_ratio, Some(f64::INFINITY));
        let empty = BoxStats::from_counts(vec![0, 0]);
        assert_eq!(empty.dominant, None);
        let tie = BoxStats::from_counts(vec![3, 3]);
        assert_eq!(tie.dominant, Some(0));
    }

    #[test]
    fn invalid_rect_rejected() {
        assert!(Rect::new(2.0, 1.0, 0.0, 1.0).is_err());
        assert!(Rect::new(0.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn two_clusters_give_two_rules() {
        let mut ps = Vec::new();
        for k in 0..10 {
            ps.push(poly(&[(1.0 + 0.1 * k as f64, 1.0)], 0));
            ps.push(poly(&[(8.0 + 0.1 * k as f64, 8.0)], 1));
        }
        let mut src = GridSource(GridParams::new(0.5));
        let rs = bc_fit(
            &ps,
            &spec2(),
            vec!["a".into(), "b".into()],
            &mut src,
            Membership::NodeIn,
            &StopConfig::default(),
        )
        .unwrap();
        assert_eq!(rs.rules.len(), 2);
        assert!(rs.rules.iter().all(|r| r.negative.is_empty()));
        assert_eq!(rs.rules.iter().map(|r| r.covered_count).sum::<usize>(), 20);
    }

    #[test]
    fn empty_stream_gives_empty_ruleset() {
        let ps = vec![poly(&[(1.0, 1.0)], 0)];
        let mut src = InjectedSource::new(Vec::new());
        let rs = bc_fit(
            &ps,
            &spec2(),
            vec!["a".into()],
            &mut src,
            Membership::NodeIn,
            &StopConfig::default(),
        )
        .unwrap();
        assert!(rs.rules.is_empty());
        assert_eq!(rs.refuse_policy, RefusePolicy::Refuse);
        assert_eq!(rs.classify_polyline(&ps[0]), Decision::Refuse);
    }

    #[test]
    fn negation_blocks_firing() {
        let ps = vec![poly(&[(1.0, 1.0), (5.0, 5.0)], 0), poly(&[(5.0, 5.2)], 1)];
        let mut src = InjectedSource::new(vec![
            (Rect::new(0.0, 2.0, 0.0, 2.0).unwrap(), Some(0)),
            (Rect::new(4.0, 6.0, 4.0, 6.0).unwrap(), Some(1)),
        ]);
        let rs = bc_fit(
            &ps,
            &spec2(),
            vec!["a".into(), "b".into()],
            &mut src,
            Membership::NodeIn,
            &StopConfig::default(),
        )
        .unwrap();
        assert_eq!(rs.rules[1].negative, vec![1]);
        assert_eq!(rs.classify_polyline(&ps[0]), Decision::Class(0));
        assert_eq!(rs.classify_polyline(&ps[1]), Decision::Class(1));
        // The second rule alone does not fire on case 0.
        assert_eq!(rs.rule_fires(&rs.rules[1], &ps[0]), None);
    }

    #[test]
    fn prune_min_one_is_identity() {
        let ps = vec![poly(&[(1.0, 1.0)], 0), poly(&[(5.0, 5.0)], 1)];
        let mut src = GridSource(GridParams::new(1.0));
        let rs = bc_fit(
            &ps,
            &spec2(),
            vec!["a".into(), "b".into()],
            &mut src,
            Membership::NodeIn,
            &StopConfig::default(),
        )
        .unwrap();
        let (pruned, report) = prune(&rs, 1, PruneMode::Refuse, &ps).unwrap();
        assert_eq!(pruned, rs);
        assert!(report.events.is_empty());
    }

    #[test]
    fn union_is_rect_cases() {
        let a = Rect::new(0.0, 1.0, 0.0, 1.0).unwrap();
        assert!(a.union_is_rect(&Rect::new(1.0, 2.0, 0.0, 1.0).unwrap()));
        assert!(!a.union_is_rect(&Rect::new(1.0, 2.0, 0.0, 2.0).unwrap()));
        assert!(!a.union_is_rect(&Rect::new(3.0, 4.0, 0.0, 1.0).unwrap()));
    }
}
